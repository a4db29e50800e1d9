"""Key-frame guided classification of ultrasound videos.

Two stages: an LSTM localizer scores every frame for key-frame likelihood,
then a lightweight 3D CNN with spatial pyramid pooling and a motion
attention branch classifies a clip centred on the located key-frame.
All layers are plain numpy with hand-written backward passes.
"""

from usvideo.errors import ConfigurationError, DataError, CheckpointError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "DataError", "CheckpointError", "__version__"]
