import logging
import sys

from crgaussmap.common import CatalogName
from crgaussmap.cr_models import catalog
from crgaussmap.harness import AnalysisConfig, analyze

LOG = logging.getLogger(__name__)


def main():
    logging.basicConfig(stream=sys.stdout, level=logging.INFO)
    for F in (catalog(CatalogName.WHITNEY, 3), catalog(CatalogName.LINEAR, 3, 5)):
        result = analyze(F, AnalysisConfig(samples=4))
        report = result.to_report()
        LOG.info(
            "%s: gauss rank %d, d = %s, l0 = %d, verdict: %s",
            F.name,
            report["gauss_generic_rank"],
            report["samples"][0]["d"],
            report["l0"],
            result.verdict.describe(),
        )


if __name__ == "__main__":
    main()
