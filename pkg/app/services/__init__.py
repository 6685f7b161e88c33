"""Pipeline stages: geometry, scene synthesis, segmentation, post-processing, fusion, evaluation."""
