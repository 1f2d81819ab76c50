# Init file for features package