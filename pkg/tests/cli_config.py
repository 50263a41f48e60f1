"""A small configuration that runs the whole pipeline in seconds."""

SMALL = """
seed: 11
beam:
  elements: 20
simulation:
  duration: 4.0
  sets_per_case: 2
  damage_levels: [0.0, 0.5]
  damaged_element: 4
enkf:
  elements: 10
  ensemble_size: 12
  window_seconds: 2.0
regularize:
  elements: 10
sacom:
  elements: 10
  samples: 400
  bins: 20
  resolution: 5
"""
