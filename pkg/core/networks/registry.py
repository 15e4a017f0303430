from typing import Dict

from core.networks.architectures import (
    ElmanRnn,
    LinearMemoryNetwork,
    LinearRnn,
    Lstm,
    RecurrentArchitecture,
)
from core.networks.params import ParamBundle


class ArchitectureRegistry:
    """
    Factory that returns the architecture implementation for a model kind
    or for a parameter bundle.
    """

    _architectures: Dict[str, RecurrentArchitecture] = {
        arch.kind: arch for arch in (LinearRnn(), ElmanRnn(), LinearMemoryNetwork(), Lstm())
    }

    @classmethod
    def get(cls, kind: str) -> RecurrentArchitecture:
        try:
            return cls._architectures[kind]
        except KeyError:
            raise ValueError(
                f"unknown recurrent model kind {kind!r}; expected one of {sorted(cls._architectures)}"
            ) from None

    @classmethod
    def for_params(cls, params: ParamBundle) -> RecurrentArchitecture:
        return cls.get(params.KIND)

    @classmethod
    def kinds(cls):
        return tuple(sorted(cls._architectures))
