"""
Command-line front end: instance files, reports and command handlers
"""
