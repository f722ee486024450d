"""
Dataset manifest: '# seed = N' header, then 'path<TAB>kinds<TAB>intensities' lines
"""
from __future__ import annotations

from classes.errors import ConfigError
from classes.image_classes import DatasetManifest, DegradationLabel, ImagePair, ManifestRecord
from imaging.image_io import read_ppm, write_ppm
from imaging.synth import degrade, splitmix64, synth_clean
from utils.checks import check_isdigit
from utils.log import log

from concurrent.futures import ThreadPoolExecutor
import os

MANIFEST_NAME = 'manifest.txt'

def write_manifest(path: str, manifest: DatasetManifest) -> None:
    lines = [f'# seed = {manifest.seed}']
    for record in manifest:
        kinds, intensities = record.label.to_fields()
        lines.append(f'{record.path}\t{kinds}\t{intensities}')
    with open(path, 'w', encoding='utf-8') as f:
        f.write('\n'.join(lines) + '\n')

def read_manifest(path: str) -> DatasetManifest:
    """
    :param path: manifest file
    :return: DatasetManifest rooted at the manifest's directory
    """
    seed = 0
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            line = line.rstrip('\n')
            if not line.strip():
                continue
            if line.startswith('#'):
                key, _, value = line.lstrip('#').partition('=')
                if key.strip() == 'seed':
                    if not check_isdigit(value.strip()):
                        raise ConfigError(f'{path}:{number}: invalid seed {value.strip()!r}')
                    seed = int(value)
                continue
            fields = line.split('\t')
            if len(fields) != 3:
                raise ConfigError(f'{path}:{number}: expected 3 tab separated fields, got {len(fields)}')
            records.append(ManifestRecord(fields[0], DegradationLabel.from_fields(fields[1], fields[2])))
    return DatasetManifest(records, seed, os.path.dirname(os.path.abspath(path)))

def load_pair(manifest: DatasetManifest, record: ManifestRecord) -> ImagePair:
    degraded = read_ppm(manifest.resolve(record.path))
    clean = read_ppm(manifest.resolve(record.clean_path()))
    return ImagePair(clean, degraded, record.label, record.path)

def _synth_one(out_dir: str, index: int, size: int, label: DegradationLabel, seed: int) -> ManifestRecord:
    image_seed = splitmix64(seed, index)
    clean = synth_clean(image_seed, size, size)
    degraded = degrade(clean, label, image_seed)
    name = f'img_{index:04d}.ppm'
    write_ppm(os.path.join(out_dir, 'clean', name), clean)
    write_ppm(os.path.join(out_dir, 'degraded', name), degraded)
    return ManifestRecord(f'degraded/{name}', label)

def synthesize_dataset(out_dir: str, count: int, size: int, label: DegradationLabel, seed: int,
                       threads: int = 1) -> DatasetManifest:
    """
    Writes `count` clean/degraded pairs and the manifest under out_dir
    Per-image seeds come from splitmix64(seed, index), so the result does not depend on `threads`.
    :return: DatasetManifest
    """
    os.makedirs(out_dir, exist_ok=True)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        records = list(pool.map(lambda i: _synth_one(out_dir, i, size, label, seed), range(count)))
    manifest = DatasetManifest(records, seed, out_dir)
    write_manifest(os.path.join(out_dir, MANIFEST_NAME), manifest)
    log('synth', f'wrote {count} pairs of {size}x{size}', options=label.to_fields(), log_type='function')
    return manifest
