"""Room acoustics and mixture simulation."""

from .mixture import (MixtureResult, MixtureSpec, SimConfig, circular_array, load_record,
                      overlap_layout, overlap_ratio, read_manifest, sample_mixture_spec,
                      sample_room, simulate_dataset, synthesize_mixture)
from .noise import colored_noise, fractional_delay_filter, generate_isotropic_noise
from .rir import GeometryError, RoomConfig, image_sources, simulate_rir, simulate_rirs
from .speech import pseudo_speech
