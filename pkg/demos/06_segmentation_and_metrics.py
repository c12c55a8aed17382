"""Rule-based tissue segmentation scored against analytic ground truth.

Runs the HU-threshold + morphology segmenter over the abdominal slices of
a phantom and reports Dice and HD95 per tissue class.
"""

import numpy as np

from abdkit.metrics import dice, hd95, score_masks
from abdkit.phantom import PhantomSpec, generate
from abdkit.segment import LABEL_MUSCLE, LABEL_SFA, LABEL_VFA, segment_slice

NAMES = {LABEL_MUSCLE: "muscle", LABEL_SFA: "SFA", LABEL_VFA: "VFA"}


def main():
    spec = PhantomSpec(dims=(12, 96, 96), spacing=(5.0, 1.5, 1.5),
                       abdomen_start=3, abdomen_end=9, seed=4,
                       noise_sigma_hu=20.0)
    volume, label, masks = generate(spec)
    sp = (volume.spacing.sy, volume.spacing.sx)

    print("slice   " + "  ".join(f"{n:>12s}" for n in NAMES.values())
          + "   (dice / hd95 mm)")
    for k in range(label.start_idx, label.end_idx + 1):
        pred = segment_slice(volume.axial(k), sp).labels
        cells = []
        for lab in NAMES:
            d = dice(pred == lab, masks[k] == lab)
            h = hd95(pred == lab, masks[k] == lab, spacing=sp)
            cells.append(f"{d:.3f}/{h:4.1f}")
        print(f"{k:5d}   " + "  ".join(f"{c:>12s}" for c in cells))

    pred_stack = np.stack([segment_slice(volume.axial(k), sp).labels
                           for k in range(volume.dims[0])])
    s = score_masks(pred_stack, np.stack(masks), spacing=sp)
    print(f"\nmacro DSC over the volume: {s.macro_dsc:.4f}")


if __name__ == "__main__":
    main()
