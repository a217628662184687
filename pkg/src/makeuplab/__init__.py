"""Data curation and evaluation toolkit for identity-consistent makeup transfer.

Subpackages:

- imgcore: tagged image buffers, CIELAB/LCh conversions, blur, compositing
- geom: landmarks, Delaunay triangulation, piecewise-affine warping
- stdmesh: the shipped canonical face mesh and template frame
- layers: makeup layer composition, extraction, application, triplets
- verifier: makeup-exclusive layer extraction (perceptual verifier)
- rewards / providers: reward math, advantages, embedding providers
- flowlab: rectified-flow sampling and fitting playground
- bench: pairing, metrics and report emission
- cli: command-line interface
"""

__version__ = "0.1.0"
