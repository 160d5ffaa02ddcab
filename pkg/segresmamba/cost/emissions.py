"""
CO2 emission estimates: `kg = power (kW) x hours x carbon intensity
(kgCO2eq/kWh)`.
"""
from dataclasses import dataclass

import psutil

from .. import settings


__all__ = ['EmissionsSpec', 'estimate_co2', 'training_hours',
           'reference_emissions', 'process_hours', 'run_emissions']


@dataclass(frozen=True)
class EmissionsSpec:
    hours: float
    device_power_kw: float = 0.25
    carbon_intensity: float = 0.61
    preset: str = None

    def __post_init__(self):
        for name in ('hours', 'device_power_kw', 'carbon_intensity'):
            value = getattr(self, name)
            if value is None or not value > 0:
                raise ValueError('{} must be positive, got {}'.format(
                    name, value))

    @classmethod
    def from_preset(cls, preset, hours, device_power_kw=None):
        """ Spec using the carbon intensity of a named cloud provider. """
        try:
            intensity = settings.SRM_CARBON_INTENSITY[preset]
        except KeyError:
            raise ValueError('unknown carbon intensity preset: {}'.format(
                preset))
        return cls(hours, device_power_kw or settings.SRM_DEVICE_POWER_KW,
                   intensity, preset)

    @classmethod
    def from_dict(cls, data):
        """
        Build from a mapping of `hours`, `power_kw` (optional), and either
        `preset` or `intensity`.
        """
        data = dict(data)
        power = data.get('power_kw') or settings.SRM_DEVICE_POWER_KW
        if data.get('preset'):
            if data.get('intensity') is not None:
                raise ValueError('give either a preset or an intensity')
            return cls.from_preset(data['preset'], data.get('hours'), power)
        if data.get('intensity') is None:
            raise ValueError('a preset or an intensity is required')
        return cls(data.get('hours'), power, data['intensity'])

    @property
    def energy_kwh(self):
        return self.device_power_kw * self.hours


def estimate_co2(spec):
    """ Emissions in kgCO2eq. """
    return spec.energy_kwh * spec.carbon_intensity


def training_hours(epoch_seconds, epochs=None, folds=None):
    """ Hours of a cross-validated training: `epoch time x epochs x folds`. """
    reference = settings.SRM_REFERENCE_TRAINING
    epochs = reference['epochs'] if epochs is None else epochs
    folds = reference['folds'] if folds is None else folds
    return epoch_seconds * epochs * folds / 3600.0


def reference_emissions(presets=None):
    """
    Emissions of the published 5-fold trainings, one row per model and
    preset: `(model, preset, hours, kg)`.
    """
    presets = presets or settings.SRM_CARBON_INTENSITY.keys()
    rows = []
    for model, seconds in settings.SRM_REFERENCE_TRAINING[
            'epoch_seconds'].items():
        hours = training_hours(seconds)
        for preset in presets:
            spec = EmissionsSpec.from_preset(preset, hours)
            rows.append((model, preset, hours, estimate_co2(spec)))
    return rows


def process_hours(process=None):
    """ CPU time (user and system) of `process`, in hours. """
    times = (process or psutil.Process()).cpu_times()
    return (times.user + times.system) / 3600.0


def run_emissions(cpu_seconds, device_power_kw=None, preset=None):
    """
    Emission estimate of a local run from its CPU time, as a dict ready to
    be serialized.
    """
    preset = preset or settings.SRM_RUN_CARBON_PRESET
    hours = max(cpu_seconds, 1e-9) / 3600.0
    spec = EmissionsSpec.from_preset(
        preset, hours, device_power_kw or settings.SRM_RUN_POWER_KW)
    return {
        'cpu_seconds': cpu_seconds,
        'hours': hours,
        'device_power_kw': spec.device_power_kw,
        'preset': preset,
        'carbon_intensity': spec.carbon_intensity,
        'kg_co2': estimate_co2(spec),
    }
