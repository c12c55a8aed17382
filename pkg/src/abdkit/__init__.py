"""abdkit: abdominal CT body-composition toolkit.

Two-stage pipeline: multi-view heatmap localization of the abdominal slice
range, then per-slice muscle/SFA/VFA segmentation with quantitative
reporting and an interactive mask-refinement service.
"""

from .volume import (Spacing, Volume, ViewSlice2D, WindowSpec, load_volume,
                     save_volume, save_rawv, save_nifti, resample_trilinear,
                     window_normalize, extract_center_views, extract_axial_range)
from .heatmap import LocLabel, encode_gaussian, encode_onehot, decode, l1_error_mm
from .segment import SegParams, segment_slice, segment_volume, ingest_mask
from .metrics import dice, iou, hd95, loc_eval_table, quantify, export_report
from .phantom import PhantomSpec, generate, generate_corpus
from .locnet import LocNetConfig, build, fuse_multiview, train, predict

__version__ = "0.1.0"
