import sys
import argparse
from typing import List, Optional

from .core.config import Config
from .core.exceptions import ConfigError


def create_parser() -> argparse.ArgumentParser:
    """Create argument parser for main entry point"""
    parser = argparse.ArgumentParser(
        prog="pricedress",
        description="pricedress - probabilistic day-ahead price forecasts from bid/ask curves",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Commands (forwarded to pricedress-cli):
  settle, features, backtest, synth, permtest, replay

Examples:
  pricedress --version                # Show version
  pricedress --config                 # Show effective configuration
  pricedress synth --out data/        # Run a command
        """
    )
    parser.add_argument("--version", action="store_true", help="Show version information")
    parser.add_argument("--config", action="store_true", help="Show configuration file location and values")
    parser.add_argument("--reset-config", action="store_true", help="Reset configuration to defaults")
    return parser


def show_version():
    """Show version information"""
    from . import __version__, __author__
    import numpy
    import pandas
    import scipy

    print(f"pricedress v{__version__}")
    print(f"Author: {__author__}")
    print(f"numpy {numpy.__version__}, scipy {scipy.__version__}, pandas {pandas.__version__}")


def show_config_info():
    """Show configuration information"""
    config = Config()

    print("pricedress Configuration")
    print("=" * 30)
    print(f"Config file: {config.config_path}")
    for section, values in config.to_dict().items():
        print()
        print(f"[{section}]")
        for key, value in values.items():
            print(f"  {key} = {value}")


def reset_config():
    """Reset configuration to defaults"""
    try:
        # the old file may be unreadable, so it is never loaded
        config = Config.defaults()
        config.save()
        print("Configuration reset to defaults successfully!")
        print(f"Config file: {config.config_path}")
    except (ConfigError, OSError) as e:
        print(f"Error resetting configuration: {e}")
        sys.exit(1)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for pricedress"""
    from .cli import COMMANDS, main as cli_main

    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in COMMANDS:
        return cli_main(argv)

    args = create_parser().parse_args(argv)
    if args.version:
        show_version()
    elif args.config:
        try:
            show_config_info()
        except ConfigError as e:
            print(f"Error: {e}")
            return 1
    elif args.reset_config:
        reset_config()
    else:
        return cli_main(argv)
    return 0


if __name__ == "__main__":
    sys.exit(main())
