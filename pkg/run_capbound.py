import sys
import logging
from pathlib import Path
sys.path.append(str(Path(__file__).parent))

from capbound.cli import settings
from capbound.cli.commands import RunConfig, run
from capbound.cli.register_commands import build_parser

if __name__ == "__main__":
    logging.basicConfig(
        level=settings.LOG_LEVEL.upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr
    )
    args = build_parser().parse_args()
    sys.exit(run(RunConfig.from_args(args)))
