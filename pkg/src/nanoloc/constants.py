"""Physical constants used across the simulator (SI units)."""

SPEED_OF_LIGHT = 299_792_458.0  # m/s
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m
BOLTZMANN = 1.380649e-23  # J/K
GRAVITY = 9.81  # m/s^2, world -z axis

BODY_TEMPERATURE_K = 310.0
