from pairtranslate.data.grid import (
    PairedPatchSample,
    PairedScene,
    PatchGrid,
    assign_region_split,
    compute_patch_grid,
    tile,
)
from pairtranslate.data.imageio import denormalize, normalize, to_images, to_tensor
from pairtranslate.data.manifest import DatasetManifest, PatchRecord, read_manifest, write_manifest
from pairtranslate.data.synth import SynthConfig, generate_scenes, generate_synthetic_pair, render
