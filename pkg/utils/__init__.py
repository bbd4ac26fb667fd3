# utils package: CLI parsing and report rendering
