import sys
import logging
from pathlib import Path
sys.path.append(str(Path(__file__).resolve().parents[1]))

from capbound.net_engine.dataset import save_csv, two_moons

logger = logging.getLogger(__name__)

if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    path = sys.argv[1] if len(sys.argv) > 1 else "moons.csv"
    m = int(sys.argv[2]) if len(sys.argv) > 2 else 200
    seed = int(sys.argv[3]) if len(sys.argv) > 3 else 0
    save_csv(path, two_moons(m, seed))
    logger.info(f"Wrote {m} two-moons samples to {path}")
