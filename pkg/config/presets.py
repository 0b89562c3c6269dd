"""
Named scenario presets, stored as config-file text.
"""
from utils.error_utils import ConfigError

HEMISPHERE = """
[geometry]
kind = "cap"
theta_max = 1.5707963267948966
n1 = 32
n2 = 32
"""

PRESETS = {
    "hemisphere-spindown": HEMISPHERE
    + """
[bc]
mode = "navier"
alpha = 1.0

[run]
task = "simulate"
dt = 0.01
t_end = 5.0
initial = "random"
seed = 0
amplitude = 1.0
""",
    "hemisphere-freeslip": HEMISPHERE
    + """
[bc]
mode = "navier"
alpha = 0.0

[run]
task = "simulate"
dt = 0.01
t_end = 10.0
initial = "random"
seed = 0
amplitude = 1.0
remove_killing = true
killing_weight = 0.3
""",
    "disk-freeslip": """
[geometry]
kind = "disk"
radius = 1.0
n1 = 32
n2 = 32

[bc]
mode = "navier"
alpha = 0.0

[run]
task = "simulate"
dt = 0.01
t_end = 5.0
initial = "random"
seed = 0
amplitude = 1.0
""",
    "cylinder-freeslip": """
[geometry]
kind = "cylinder"
radius = 1.0
height = 1.0
n1 = 32
n2 = 32

[bc]
mode = "navier"
alpha = 0.0

[run]
task = "simulate"
dt = 0.01
t_end = 5.0
initial = "random"
seed = 0
amplitude = 1.0
""",
    "hemisphere-perfect": HEMISPHERE
    + """
[bc]
mode = "perfect"

[run]
task = "simulate"
dt = 0.01
t_end = 5.0
initial = "random"
seed = 0
amplitude = 1.0
""",
}


def preset_text(name):
    """
    Config text of a preset.

    Raises:
        ConfigError: If the preset does not exist
    """
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset '{name}' (available: {', '.join(sorted(PRESETS))})", key="preset")
    return PRESETS[name]
