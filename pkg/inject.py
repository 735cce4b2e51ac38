import logging
import numpy as np

from geo_evs import io
from geo_evs.artifact import DEFAULT_P_INJECT, inject_artifact

logger = logging.getLogger(__name__)


def main(args):
    condition = io.read_condition(args.cond)
    library = io.read_mask_library(args.lib)
    rng = np.random.default_rng(args.seed)

    injected, index = inject_artifact(condition, library, args.p, rng)
    io.write_condition(args.out, injected)
    if index is None:
        logger.info('Gate closed: `{0}` copied unchanged.'.format(args.cond))
    else:
        logger.info('Applied mask {0}: {1:.1%} -> {2:.1%} valid.'.format(index,
                    condition.valid_fraction, injected.valid_fraction))


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(description='Artifact injection - '
        'Perturb a condition map with a mask of the library')

    parser.add_argument('--cond', type=str, required=True,
        help='prefix of the input condition map')
    parser.add_argument('--lib', type=str, required=True,
        help='directory of the mask library')
    parser.add_argument('--p', type=float, default=DEFAULT_P_INJECT,
        help='injection probability (default: {0})'.format(DEFAULT_P_INJECT))

    # Miscellaneous
    misc = parser.add_argument_group('Miscellaneous')
    misc.add_argument('--out', type=str, required=True,
        help='prefix of the output condition map')
    misc.add_argument('--seed', type=int, default=0,
        help='random seed (default: 0)')

    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    main(args)
