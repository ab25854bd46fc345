"""tactus: a reactive musical control server.

Gesture events ride a time-tagged discrete-event protocol with
pattern-matched dispatch; continuous gestures ride the audio clock at an
integer submultiple of the sample rate; mapping metaphors (drag and
drop, scrubbing, dipping) turn both into sound.
"""

from .codec import (
    OscBundle,
    OscError,
    OscMessage,
    decode_packet,
    encode_packet,
)
from .config import ServerConfig
from .connectivity import StreamConfig, model_latency
from .engine import Engine, measure_loopback, measure_network_jitter, replay
from .layout import Layout, load_layout, parse_layout
from .router import AddressSpace, Pattern, match_pattern
from .scheduler import Scheduler, SimClock
from .session import SessionRecord, load_session, save_session
from .synth import SinusoidalModel, load_model, resynthesize
from .timetags import IMMEDIATE, TimeTag, timetag_from_seconds, timetag_to_seconds

__version__ = "0.1.0"
