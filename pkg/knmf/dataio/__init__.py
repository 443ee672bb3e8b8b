"""Cube, factor and report files; synthetic scene generation."""

from knmf.dataio.cube import read_cube, write_cube
from knmf.dataio.factors import read_abundances, read_endmembers, write_abundances, write_endmembers
from knmf.dataio.report import RunReport, build_report, write_abundance_maps, write_pgm, write_report
from knmf.dataio.scene import EndmemberModel, MixingModel, SceneSpec, synth_scene

__all__ = [
    "read_cube",
    "write_cube",
    "read_abundances",
    "read_endmembers",
    "write_abundances",
    "write_endmembers",
    "RunReport",
    "build_report",
    "write_abundance_maps",
    "write_pgm",
    "write_report",
    "EndmemberModel",
    "MixingModel",
    "SceneSpec",
    "synth_scene",
]
