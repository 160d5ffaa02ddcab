"""
Binary file formats, all little-endian:

- volume (`SRMV`): magic, version (u32), ndim (u32), extents (u32 x ndim),
  dtype code (u32: 0 float64, 1 float32, 2 int32) then the row-major
  payload;
- checkpoint (`SRMC`): magic, version (u32), sha256 digest of the model
  configuration (32 bytes), tensor count (u32), then for each parameter its
  name length (u32), UTF-8 name and the tensor as a volume.
"""
from collections import OrderedDict
import io
import logging
import struct

import numpy as np

from .utils import FormatError


__all__ = ['VOLUME_MAGIC', 'CHECKPOINT_MAGIC', 'FORMAT_VERSION', 'DTYPES',
           'VolumeFile', 'CheckpointFile']

logger = logging.getLogger('segresmamba')

VOLUME_MAGIC = b'SRMV'
CHECKPOINT_MAGIC = b'SRMC'
FORMAT_VERSION = 1

DTYPES = OrderedDict([
    (0, np.dtype('<f8')),
    (1, np.dtype('<f4')),
    (2, np.dtype('<i4')),
])
DTYPE_CODES = {dtype: code for code, dtype in DTYPES.items()}


def _read(stream, size, what):
    data = stream.read(size)
    if len(data) != size:
        raise FormatError('truncated {}: expected {} bytes, got {}'.format(
            what, size, len(data)))
    return data


def _read_u32(stream, what):
    return struct.unpack('<I', _read(stream, 4, what))[0]


def _check_eof(stream):
    if stream.read(1):
        raise FormatError('trailing data after payload')


class VolumeFile:
    """ N-dimensional array stored in the `SRMV` format. """
    def __init__(self, array, dtype=None):
        array = np.asarray(array)
        dtype = np.dtype(array.dtype if dtype is None else dtype) \
            .newbyteorder('<')
        if dtype not in DTYPE_CODES:
            raise FormatError('unsupported dtype {}'.format(array.dtype))
        self.array = np.ascontiguousarray(array, dtype=dtype)

    @property
    def dtype_code(self):
        return DTYPE_CODES[self.array.dtype]

    def write(self, stream):
        array = self.array
        stream.write(VOLUME_MAGIC)
        stream.write(struct.pack('<II', FORMAT_VERSION, array.ndim))
        stream.write(struct.pack('<{}I'.format(array.ndim), *array.shape))
        stream.write(struct.pack('<I', self.dtype_code))
        stream.write(array.tobytes(order='C'))

    def to_bytes(self):
        out = io.BytesIO()
        self.write(out)
        return out.getvalue()

    def save(self, path):
        with open(path, 'wb') as stream:
            self.write(stream)
        logger.debug('volume %s written to %s', self.array.shape, path)

    @classmethod
    def read(cls, stream):
        """ Read one volume from `stream`, leaving it after the payload. """
        magic = _read(stream, 4, 'magic')
        if magic != VOLUME_MAGIC:
            raise FormatError('not a volume file (magic {!r})'.format(magic))
        version = _read_u32(stream, 'version')
        if version != FORMAT_VERSION:
            raise FormatError('unsupported volume version {}'.format(version))
        ndim = _read_u32(stream, 'ndim')
        shape = struct.unpack('<{}I'.format(ndim),
                              _read(stream, 4 * ndim, 'extents'))
        code = _read_u32(stream, 'dtype code')
        if code not in DTYPES:
            raise FormatError('unknown dtype code {}'.format(code))
        dtype = DTYPES[code]
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        payload = _read(stream, size, 'payload')
        return cls(np.frombuffer(payload, dtype=dtype).reshape(shape).copy())

    @classmethod
    def from_bytes(cls, data):
        stream = io.BytesIO(data)
        volume = cls.read(stream)
        _check_eof(stream)
        return volume

    @classmethod
    def load(cls, path):
        with open(path, 'rb') as stream:
            volume = cls.read(stream)
            _check_eof(stream)
        return volume


class CheckpointFile:
    """
    Ordered named parameters of a model, bound to the digest of the model
    configuration they were saved from.
    """
    def __init__(self, digest, tensors):
        if len(digest) != 32:
            raise FormatError('config digest must be 32 bytes')
        self.digest = bytes(digest)
        self.tensors = OrderedDict(tensors)

    @classmethod
    def from_model(cls, model):
        return cls(model.config.digest, model.state_dict())

    def restore(self, model):
        """ Load parameters into `model`, whose config must match. """
        if model.config.digest != self.digest:
            raise FormatError(
                'checkpoint config digest {} does not match model {}'.format(
                    self.digest.hex()[:12], model.config.digest.hex()[:12]))
        try:
            model.load_state_dict(self.tensors)
        except (KeyError, ValueError) as err:
            raise FormatError('checkpoint does not fit the model: {}'
                              .format(err)) from err
        return model

    def write(self, stream):
        stream.write(CHECKPOINT_MAGIC)
        stream.write(struct.pack('<I', FORMAT_VERSION))
        stream.write(self.digest)
        stream.write(struct.pack('<I', len(self.tensors)))
        for name, array in self.tensors.items():
            name = name.encode('utf-8')
            stream.write(struct.pack('<I', len(name)))
            stream.write(name)
            VolumeFile(array).write(stream)

    def to_bytes(self):
        out = io.BytesIO()
        self.write(out)
        return out.getvalue()

    def save(self, path):
        with open(path, 'wb') as stream:
            self.write(stream)
        logger.info('checkpoint of %d tensors written to %s',
                    len(self.tensors), path)

    @classmethod
    def read(cls, stream):
        magic = _read(stream, 4, 'magic')
        if magic != CHECKPOINT_MAGIC:
            raise FormatError('not a checkpoint file (magic {!r})'.format(
                magic))
        version = _read_u32(stream, 'version')
        if version != FORMAT_VERSION:
            raise FormatError('unsupported checkpoint version {}'.format(
                version))
        digest = _read(stream, 32, 'config digest')
        tensors = OrderedDict()
        for _ in range(_read_u32(stream, 'tensor count')):
            length = _read_u32(stream, 'name length')
            try:
                name = _read(stream, length, 'name').decode('utf-8')
            except UnicodeDecodeError as err:
                raise FormatError('invalid tensor name: {}'.format(err))
            if name in tensors:
                raise FormatError('duplicate tensor {}'.format(name))
            tensors[name] = VolumeFile.read(stream).array
        return cls(digest, tensors)

    @classmethod
    def from_bytes(cls, data):
        stream = io.BytesIO(data)
        checkpoint = cls.read(stream)
        _check_eof(stream)
        return checkpoint

    @classmethod
    def load(cls, path):
        with open(path, 'rb') as stream:
            checkpoint = cls.read(stream)
            _check_eof(stream)
        return checkpoint
