from linearizer.cli import cli

# Entry script; the console script `linearizer` points at the same group.
if __name__ == "__main__":
    cli()
