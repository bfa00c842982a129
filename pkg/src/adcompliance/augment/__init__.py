from .batch import VARIANTS_MANIFEST, AugmentResult, augment_creatives, image_seed, variant_id
from .ops import (
    AugmentationKind,
    AugmentedImage,
    AugmentError,
    AugmentParams,
    DEFAULT_PARAMS,
    MissingMask,
    UnsupportedFormat,
    apply,
    default_lexicon,
    encode_png,
    load_image,
    rotation_angle,
    suite,
    variant_seed,
)

__all__ = [
    "VARIANTS_MANIFEST",
    "AugmentResult",
    "augment_creatives",
    "image_seed",
    "variant_id",
    "AugmentationKind",
    "AugmentedImage",
    "AugmentError",
    "AugmentParams",
    "DEFAULT_PARAMS",
    "MissingMask",
    "UnsupportedFormat",
    "apply",
    "default_lexicon",
    "encode_png",
    "load_image",
    "rotation_angle",
    "suite",
    "variant_seed",
]
