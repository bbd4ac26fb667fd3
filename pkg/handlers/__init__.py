# handlers package: one cmd_* per subcommand
