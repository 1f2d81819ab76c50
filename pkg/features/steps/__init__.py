# Init file for steps package