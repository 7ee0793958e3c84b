"""
prenetctl - progressive image deraining

PRN / PReNet networks on a small numpy autograd core, with training,
stage-wise inference, PSNR/SSIM evaluation and synthetic rain generation
exposed through a Click CLI.
"""

__version__ = "0.1.0"
