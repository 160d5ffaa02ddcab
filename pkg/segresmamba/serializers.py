"""
Validation of the configuration document sections. Every serializer rejects
unknown keys; keys left out take the values of the `SRM_*_DEFAULTS`
settings.
"""
from rest_framework import serializers

from . import settings


__all__ = ['StrictSerializer', 'ModelSection', 'TrainSection',
           'DataSection', 'AnalyzeSection', 'EmissionsSection',
           'DocumentSerializer']


class StrictSerializer(serializers.Serializer):
    """ Serializer refusing keys it does not declare. """
    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError(
                    {key: ['unknown key'] for key in unknown})
        return super().to_internal_value(data)


def extents_field(**kwargs):
    return serializers.ListField(
        child=serializers.IntegerField(min_value=1),
        min_length=3, max_length=3, **kwargs)


class ModelSection(StrictSerializer):
    preset = serializers.ChoiceField(
        choices=sorted(settings.SRM_DATASET_PRESETS), required=False)
    in_channels = serializers.IntegerField(min_value=1, required=False)
    num_classes = serializers.IntegerField(min_value=1, required=False)
    stage_channels = serializers.ListField(
        child=serializers.IntegerField(min_value=1),
        min_length=4, max_length=4, required=False)
    cmmb_per_stage = serializers.IntegerField(min_value=0, required=False)
    d_state = serializers.IntegerField(min_value=1, required=False)
    expand = serializers.IntegerField(min_value=1, required=False)
    d_conv = serializers.IntegerField(min_value=1, required=False)
    dt_rank = serializers.IntegerField(min_value=1, required=False,
                                       allow_null=True)
    norm_groups = serializers.IntegerField(min_value=1, required=False)
    residual_order = serializers.ChoiceField(('pre', 'post'),
                                             required=False)
    mlp_hidden_ratio = serializers.FloatField(min_value=0, required=False)
    mlp_activation = serializers.ChoiceField(('silu', 'relu', 'identity'),
                                             required=False)
    mlp_norm = serializers.BooleanField(required=False)
    tom_pre_norm = serializers.BooleanField(required=False)
    slice_order = serializers.ChoiceField(('hwd', 'whd'), required=False)
    multi_label = serializers.BooleanField(required=False)
    input_extents = extents_field(required=False)
    waive_bottleneck = serializers.BooleanField(required=False)
    norm_epsilon = serializers.FloatField(min_value=0, required=False)


class TrainSection(StrictSerializer):
    steps = serializers.IntegerField(min_value=0, required=False)
    epochs = serializers.IntegerField(min_value=0, required=False,
                                      allow_null=True)
    lr_max = serializers.FloatField(min_value=0, required=False)
    lr_min = serializers.FloatField(min_value=0, required=False)
    weight_decay = serializers.FloatField(min_value=0, required=False)
    betas = serializers.ListField(
        child=serializers.FloatField(min_value=0, max_value=1),
        min_length=2, max_length=2, required=False)
    eps = serializers.FloatField(min_value=0, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    patch_extents = extents_field(required=False, allow_null=True)
    eval_every = serializers.IntegerField(min_value=0, required=False)
    smooth = serializers.FloatField(min_value=0, required=False)
    include_background = serializers.BooleanField(required=False)
    augment = serializers.BooleanField(required=False)
    flip_prob = serializers.FloatField(min_value=0, max_value=1,
                                       required=False)
    scale_range = serializers.ListField(
        child=serializers.FloatField(), min_length=2, max_length=2,
        required=False)
    foreground_crop = serializers.BooleanField(required=False)
    intensity_range = serializers.ListField(
        child=serializers.FloatField(), min_length=2, max_length=2,
        required=False, allow_null=True)

    def validate(self, data):
        if data.get('lr_min', 0) > data.get(
                'lr_max', settings.SRM_TRAIN_DEFAULTS['lr_max']):
            raise serializers.ValidationError('lr_min exceeds lr_max')
        return data


class DataSection(StrictSerializer):
    samples = serializers.IntegerField(min_value=1, required=False)
    extents = extents_field(required=False)
    noise = serializers.FloatField(min_value=0, required=False)
    max_ellipsoids = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)


class AnalyzeSection(StrictSerializer):
    input_extents = extents_field(required=False)
    bytes_per_element = serializers.ChoiceField((1, 2, 4, 8),
                                                required=False)
    batch = serializers.IntegerField(min_value=0, required=False)
    reference = serializers.ChoiceField(
        choices=sorted(settings.SRM_REFERENCE_FIGURES['macs']),
        required=False, allow_null=True)


class EmissionsSection(StrictSerializer):
    hours = serializers.FloatField()
    power_kw = serializers.FloatField(required=False)
    preset = serializers.ChoiceField(
        choices=sorted(settings.SRM_CARBON_INTENSITY), required=False)
    intensity = serializers.FloatField(required=False)

    def validate(self, data):
        if ('preset' in data) == ('intensity' in data):
            raise serializers.ValidationError(
                'give either a preset or an intensity')
        for key in ('hours', 'power_kw', 'intensity'):
            if key in data and not data[key] > 0:
                raise serializers.ValidationError(
                    {key: ['must be positive']})
        return data


class DocumentSerializer(StrictSerializer):
    version = serializers.IntegerField()
    model = ModelSection(required=False)
    train = TrainSection(required=False)
    data = DataSection(required=False)
    analyze = AnalyzeSection(required=False)
    emissions = EmissionsSection(required=False, allow_null=True)

    def validate_version(self, value):
        if value != settings.SRM_CONFIG_VERSION:
            raise serializers.ValidationError(
                'unsupported version {}, expected {}'.format(
                    value, settings.SRM_CONFIG_VERSION))
        return value
