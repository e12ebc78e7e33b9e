"""Diffusion-process watermarking toolkit.

The heavy lifting lives in the compiled extension ``_diffmark``; this package
re-exports its surface. Wheels ship the extension inside the package; in a
plain CMake build it sits on PYTHONPATH instead.
"""

try:
    from . import _diffmark as _core
except ImportError:  # CMake build: extension on PYTHONPATH, not in the package
    import _diffmark as _core

globals().update({k: v for k, v in vars(_core).items() if not k.startswith("__")})
__version__ = _core.__version__
