"""
Entry point for python -m mvsmamba
"""

import sys

from dotenv import load_dotenv


def main(argv=None):
    # Load environment variables
    load_dotenv()

    from mvsmamba import create_cli
    from mvsmamba.config.settings import get_config
    from mvsmamba.utils.exceptions import ConfigurationError

    config = get_config()

    # Validate configuration
    try:
        config.validate()
    except ConfigurationError as e:
        print(f"Configuration error: {e.message} {e.details}", file=sys.stderr)
        print("Please check the environment variables in your .env file", file=sys.stderr)
        sys.exit(e.exit_code)

    cli = create_cli(config)
    cli.main(args=argv, prog_name='mvsmamba')


if __name__ == '__main__':
    main()
