from .linkage import LinkageResult, linkage_attack
from .staypoints import AttackParams, Poi, extract_stay_points, match_pois
