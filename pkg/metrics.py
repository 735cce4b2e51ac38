import os
import json
import logging

from geo_evs import io, lpsr

logger = logging.getLogger(__name__)


def parse_edges(text):
    return [float(edge) for edge in text.split(',')]


def main(args):
    offsets = {}
    if args.offsets is not None:
        with open(args.offsets, 'r') as f:
            offsets = json.load(f)

    names = sorted(name for name in os.listdir(args.pred)
                   if name.endswith('.png'))
    if not names:
        raise ValueError('No PNG prediction in `{0}`.'.format(args.pred))

    records = []
    for name in names:
        view = os.path.splitext(name)[0]
        prediction = io.read_image(os.path.join(args.pred, name))
        reference = lpsr.SparseReference(io.read_image(os.path.join(args.ref, name)),
                                         io.read_mask(os.path.join(args.mask, name)))
        records.append(lpsr.evaluate_view(prediction, reference,
                                          pose_offset=offsets.get(view, 0.),
                                          view=view))

    report = lpsr.bin_and_aggregate(records,
                                    offset_bins=parse_edges(args.bins_offset),
                                    sparsity_bins=parse_edges(args.bins_sparsity))
    io.write_report(args.out, report)
    logger.info('S-PSNR {0:.3f} dB over {1} views.'.format(
                report['overall']['s_psnr'], len(records)))


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(description='Sparse-reference evaluation '
        '- Masked metrics and binned report')

    # Inputs (matched by file name)
    inputs = parser.add_argument_group('Inputs')
    inputs.add_argument('--pred', type=str, required=True,
        help='directory of the predicted images')
    inputs.add_argument('--ref', type=str, required=True,
        help='directory of the sparse reference images')
    inputs.add_argument('--mask', type=str, required=True,
        help='directory of the reference masks')
    inputs.add_argument('--offsets', type=str, default=None,
        help='JSON mapping view names to pose offsets in degrees (default: 0)')

    # Binning
    binning = parser.add_argument_group('Binning')
    binning.add_argument('--bins-offset', type=str, default='0,5,10,15,20,30',
        help='pose-offset bin edges, in degrees')
    binning.add_argument('--bins-sparsity', type=str, default='0,0.02,0.05,0.1',
        help='sparsity (valid fraction) bin edges')

    misc = parser.add_argument_group('Miscellaneous')
    misc.add_argument('--out', type=str, required=True,
        help='path of the output report')

    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    main(args)
