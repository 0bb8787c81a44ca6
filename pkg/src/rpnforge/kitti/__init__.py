from .labels import (
    Difficulty,
    KittiLabel,
    classify_difficulty,
    parse_label_file,
    write_detections,
    write_label_file,
)
from .ppm import load_ppm, save_ppm
from .preprocess import pad_to_multiple, preprocess_image
from .synthetic import SceneSpec, generate_synthetic_scene, write_scene_dataset

__all__ = [
    "Difficulty",
    "KittiLabel",
    "classify_difficulty",
    "parse_label_file",
    "write_detections",
    "write_label_file",
    "load_ppm",
    "save_ppm",
    "pad_to_multiple",
    "preprocess_image",
    "SceneSpec",
    "generate_synthetic_scene",
    "write_scene_dataset",
]
