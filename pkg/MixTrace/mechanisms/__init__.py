from .mixzone import MixZone, MixZoneParams, SwapEvent, apply_mix_zones, detect_meetings, zone_audit
from .smoothing import SmoothingParams, smooth_constant_speed, smooth_dataset, speed_profile
