"""The GHS1 model file and encoding of raw descriptors with a saved model."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from globalhash.codes import CodeMatrix, words_for
from globalhash.constellation import Constellation, encode, layout_rho
from globalhash.embedding import EmbeddingModel, embed
from globalhash.lsh import LshModel, lsh_encode

MODEL_MAGIC = b"GHS1"
MODEL_VERSION = 1
KIND_CODES = {"pca": 0, "cca": 1, "lsh": 2}
KIND_NAMES = {code: name for name, code in KIND_CODES.items()}


class ModelFileError(ValueError):
    """Error for unreadable or inconsistent model files."""

    pass


class HashingModel(BaseModel):
    """
    Everything needed to hash a raw descriptor: an embedding plus satellites,
    or a random-projection baseline.

    :param embedding:
        the PCA or CCA embedding, for satellite models
    :param constellation:
        the trained satellites and thresholds, for satellite models
    :param lsh:
        the random hyperplanes, for the baseline
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    embedding: Optional[EmbeddingModel] = None
    constellation: Optional[Constellation] = None
    lsh: Optional[LshModel] = None

    @model_validator(mode="after")
    def must_be_one_kind(self) -> HashingModel:
        """Require either a full satellite model or an LSH model."""
        satellite_parts = (self.embedding is not None, self.constellation is not None)
        if self.lsh is not None:
            if any(satellite_parts):
                raise ValueError("an LSH model cannot also hold satellites")
            return self
        if not all(satellite_parts):
            raise ValueError("a satellite model needs both an embedding and a constellation")
        if self.embedding.output_dim != self.constellation.d:
            raise ValueError(
                f"embedding gives {self.embedding.output_dim} dimensions "
                f"but satellites have {self.constellation.d}"
            )
        return self

    @property
    def kind(self) -> Literal["pca", "cca", "lsh"]:
        """Get the model kind stored in the file header."""
        if self.lsh is not None:
            return "lsh"
        return self.embedding.kind

    @property
    def input_dim(self) -> int:
        """Get D, the raw descriptor dimension."""
        if self.lsh is not None:
            return self.lsh.projection.shape[0]
        return self.embedding.input_dim

    @property
    def c(self) -> int:
        """Get the code length."""
        if self.lsh is not None:
            return self.lsh.c
        return self.constellation.c


def encode_vectors(
    model: HashingModel, data: np.ndarray, threads: Optional[int] = None
) -> CodeMatrix:
    """Hash raw descriptors: embed them, then threshold their satellite distances."""
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim == 2 and matrix.shape[0] == 0:
        return CodeMatrix(c=model.c, words=np.zeros((0, words_for(model.c)), dtype=np.uint64))
    if matrix.ndim != 2 or matrix.shape[1] != model.input_dim:
        raise ModelFileError(
            f"vectors have shape {matrix.shape} but the model expects {model.input_dim} columns"
        )
    if model.lsh is not None:
        return lsh_encode(matrix, model.lsh)
    return encode(embed(model.embedding, matrix), model.constellation, threads=threads)


def _f64(values) -> bytes:
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


def write_model(model: HashingModel, path: Union[str, Path]) -> None:
    """
    Write a GHS1 model file.

    Layout (little-endian): magic ``GHS1``; version u32; kind u8
    (0 pca, 1 cca, 2 lsh); D, d, c as u32; r_s f64; mean (D f64);
    projection (D·d f64, row-major); scale f64; group count u32 followed by
    start/length u32 pairs; satellites (c·d f64); thresholds (c f64).
    LSH models store their D×c hyperplanes as the projection, scale 1,
    no groups and no satellite or threshold sections.
    """
    parts = [MODEL_MAGIC, struct.pack("<IB", MODEL_VERSION, KIND_CODES[model.kind])]
    if model.lsh is not None:
        lsh = model.lsh
        input_dim, c = lsh.projection.shape
        parts += [
            struct.pack("<III", input_dim, c, c),
            struct.pack("<d", 0.0),
            _f64(lsh.mean),
            _f64(lsh.projection),
            struct.pack("<d", 1.0),
            struct.pack("<I", 0),
        ]
    else:
        embedding, constellation = model.embedding, model.constellation
        parts += [
            struct.pack("<III", embedding.input_dim, embedding.output_dim, constellation.c),
            struct.pack("<d", constellation.r_s),
            _f64(embedding.mean),
            _f64(embedding.projection),
            struct.pack("<d", embedding.scale),
            struct.pack("<I", len(constellation.groups)),
        ]
        parts += [struct.pack("<II", start, length) for start, length in constellation.groups]
        parts += [_f64(constellation.satellites), _f64(constellation.thresholds)]
    Path(path).write_bytes(b"".join(parts))


class _Cursor:
    """Sequential little-endian reader over a byte string."""

    def __init__(self, raw: bytes, name: str):
        self.raw = raw
        self.offset = 0
        self.name = name

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.raw):
            raise ModelFileError(f"{self.name} is truncated at byte {self.offset}")
        chunk = self.raw[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def read_model(path: Union[str, Path]) -> HashingModel:
    """Read a GHS1 model file written by :func:`write_model`."""
    cursor = _Cursor(Path(path).read_bytes(), name=str(path))
    if cursor.take(4) != MODEL_MAGIC:
        raise ModelFileError(f"{path} is not a GHS1 model file")
    version, kind_code = cursor.unpack("<IB")
    if version != MODEL_VERSION:
        raise ModelFileError(f"{path} has unsupported version {version}")
    if kind_code not in KIND_NAMES:
        raise ModelFileError(f"{path} has unknown model kind {kind_code}")
    kind = KIND_NAMES[kind_code]
    input_dim, d, c = cursor.unpack("<III")
    (r_s,) = cursor.unpack("<d")
    mean = cursor.floats(input_dim)
    projection = cursor.floats(input_dim * d).reshape(input_dim, d)
    (scale,) = cursor.unpack("<d")
    (group_count,) = cursor.unpack("<I")
    groups = [cursor.unpack("<II") for _ in range(group_count)]
    if kind != "lsh":
        satellites = cursor.floats(c * d).reshape(c, d)
        thresholds = cursor.floats(c)
    try:
        if kind == "lsh":
            result = HashingModel(lsh=LshModel(mean=mean, projection=projection))
        else:
            result = HashingModel(
                embedding=EmbeddingModel(
                    mean=mean, projection=projection, scale=scale, kind=kind
                ),
                constellation=Constellation(
                    satellites=satellites,
                    thresholds=thresholds,
                    groups=[tuple(group) for group in groups],
                    r_s=r_s,
                    rho=layout_rho(c, d),
                ),
            )
    except ValueError as err:
        raise ModelFileError(f"{path} holds an inconsistent model: {err}") from err
    if cursor.offset != len(cursor.raw):
        raise ModelFileError(f"{path} has {len(cursor.raw) - cursor.offset} trailing bytes")
    return result
