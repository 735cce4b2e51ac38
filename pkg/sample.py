import os
import json
import logging

from geo_evs import io
from geo_evs.diffusion.sampler import DEFAULT_NUM_STEPS, DEFAULT_S_CFG, sample
from geo_evs.utils.helpers import DEFAULT_CONFIG, get_schedule_for_config

logger = logging.getLogger(__name__)


def main(args):
    model, schedule = io.read_checkpoint(args.ckpt)
    if schedule is None:
        schedule = get_schedule_for_config(DEFAULT_CONFIG)
    condition = io.read_condition(args.cond)

    logs = {}
    image = sample(model, condition, schedule, num_steps=args.steps,
                   s_cfg=args.cfg, seed=args.seed, stochastic=args.stochastic,
                   logs=logs)
    io.write_image(args.out, image)

    logs.update(checkpoint=args.ckpt, condition=args.cond)
    with open(os.path.splitext(args.out)[0] + '.json', 'w') as f:
        json.dump(logs, f, indent=2)
    logger.info('Wrote `{0}` (T={1}, s_cfg={2}).'.format(args.out, args.steps,
                                                         args.cfg))


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(description='Geometry-conditioned '
        'diffusion - Sample')

    parser.add_argument('--ckpt', type=str, required=True,
        help='path to the checkpoint')
    parser.add_argument('--cond', type=str, required=True,
        help='prefix of the condition map')

    # Sampler
    sampler = parser.add_argument_group('Sampler')
    sampler.add_argument('--steps', type=int, default=DEFAULT_NUM_STEPS,
        help='number of denoising steps (default: {0})'.format(DEFAULT_NUM_STEPS))
    sampler.add_argument('--cfg', type=float, default=DEFAULT_S_CFG,
        help='classifier-free guidance scale (default: {0})'.format(DEFAULT_S_CFG))
    sampler.add_argument('--stochastic', action='store_true',
        help='use the stochastic ancestral update (default: deterministic)')

    # Miscellaneous
    misc = parser.add_argument_group('Miscellaneous')
    misc.add_argument('--out', type=str, required=True,
        help='path of the output PNG (metadata in the sibling JSON)')
    misc.add_argument('--seed', type=int, default=0,
        help='random seed (default: 0)')

    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    main(args)
