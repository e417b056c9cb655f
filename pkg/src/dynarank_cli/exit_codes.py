EXIT_FAILURE = 1
