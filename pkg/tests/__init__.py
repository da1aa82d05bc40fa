# Empty init file to make the tests directory a proper package
