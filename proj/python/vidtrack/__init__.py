"""Video object detection toolkit: correlation tracker head, tracking-first
merge, Seq-NMS / Seq-Track-NMS linking and mAP evaluation."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401

__version__ = "0.1.0"
