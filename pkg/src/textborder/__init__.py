"""Toolkit for border-band scene-text detection pipelines.

Covers the non-neural parts of a detector: geometric primitives, dataset
annotation parsing, text-segment resampling augmentation, ground-truth
map generation, multi-task losses with analytic gradients, map-to-box
decoding, and detection evaluation protocols.
"""

from .annotations import (AnnotatedImage, AnnotationError, TextAnnotation,
                          parse_icdar13, parse_icdar17_quad, parse_msra,
                          read_detections, write_detections)
from .augment import (AugmentedImage, SampleWindow, augment_image,
                      inpaint_region, random_resize_crop, sample_window)
from .decoder import (DecodeParams, NoiseSpec, PredictionMaps, TextComponent,
                      binarize, decode, delineate, end_pixels, merge_ends,
                      oracle_predict, regress_end)
from .evaluate import (MatchReport, evaluate_corpus, iou_sweep, match_icdar13,
                       match_one_to_one)
from .geometry import (DetectionBox, Quad, RotatedRect, component_orientation,
                       iou, min_area_rect, polygon_intersection_area,
                       rotated_nms)
from .labels import (BorderSegments, LabelMaps, MapFormatError,
                     extract_border_segments, rasterize_labels, read_fmap,
                     read_maps, write_fmap, write_maps)
from .losses import (LossReport, LossWeights, dice_coefficient, dice_loss,
                     iou_loss, total_loss)

__version__ = "0.1.0"
