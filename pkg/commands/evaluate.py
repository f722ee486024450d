from __future__ import annotations

from classes.data_classes import ReturnData
from classes.errors import ImageFormatError, ShapeError
from classes.typed_dictionaries import EvalRow, SkippedImage
from commands.route_stats import format_routing, summarize_routing
from commands.utils import ensure_dir, restore
from engine.tensor_class import no_grad
from imaging.manifest import load_pair, read_manifest
from imaging.metrics import psnr, ssim
from network.model import RestorationNetwork
from utils.checkpoint import load_checkpoint
from utils.log import log

from concurrent.futures import ThreadPoolExecutor
import numpy as np
import os

REPORT_NAME = 'eval.txt'

def evaluate_model(model: RestorationNetwork, manifest_path: str, threads: int = 1) -> (list, list, list):
    """
    Full-image inference and PSNR / SSIM per manifest image

    Images that cannot be read or do not fit the network are skipped with a warning.

    :param model: RestorationNetwork
    :param manifest_path: manifest file
    :param threads: worker threads, one image per task
    :return: (EvalRow list in manifest order, SkippedImage list, RoutingSummary list)
    """
    data = read_manifest(manifest_path)

    def run(record):
        try:
            pair = load_pair(data, record)
            with no_grad():
                restored, stats = restore(model, pair.degraded, pair.label)
        except (ShapeError, ImageFormatError, OSError) as e:
            log('eval', f'warning: skipped {record.path}', [str(e)], log_type='error')
            return None, SkippedImage(path=record.path, reason=str(e).replace('\n', ' '))
        row = EvalRow(path=record.path, psnr=psnr(restored, pair.clean), ssim=ssim(restored, pair.clean))
        return (row, stats), None

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(run, data.records))

    rows = [result[0] for result, _ in results if result is not None]
    routing = [result[1] for result, _ in results if result is not None]
    skipped = [skip for _, skip in results if skip is not None]
    return rows, skipped, summarize_routing(model, routing)

def format_report(rows: list, skipped: list, summaries: list) -> list:
    """
    'path psnr ssim' per image, 'mean psnr ssim', 'skipped path reason', then the routing lines
    """
    lines = [f"{row['path']} {row['psnr']:.4f} {row['ssim']:.6f}" for row in rows]
    if rows:
        lines.append(f"mean {np.mean([r['psnr'] for r in rows]):.4f} {np.mean([r['ssim'] for r in rows]):.6f}")
    lines.extend(f"skipped {skip['path']} {skip['reason']}" for skip in skipped)
    lines.extend(format_routing(summaries))
    return lines

def evaluate_def(checkpoint: str, manifest: str, out: str, threads: int = 1) -> ReturnData:
    """
    Evaluates a checkpoint on a manifest and writes out/eval.txt
    :param checkpoint: checkpoint file
    :param manifest: manifest file
    :param out: output directory
    :param threads: worker threads
    :return: ReturnData with (rows, skipped, summaries) as data
    """
    log('eval', 'evaluate_def', [checkpoint, manifest, out, threads], log_type='function')
    try:
        model, _ = load_checkpoint(checkpoint)
        rows, skipped, summaries = evaluate_model(model, manifest, threads)
    except (ValueError, RuntimeError, OSError) as e:
        log('eval', f'evaluation failed: {e}', [checkpoint, manifest], log_type='error')
        return ReturnData(False, str(e))

    lines = format_report(rows, skipped, summaries)
    with open(os.path.join(ensure_dir(out), REPORT_NAME), 'w', encoding='utf-8') as f:
        f.write('\n'.join(lines) + '\n')
    if not rows:
        return ReturnData(False, 'no image could be evaluated', (rows, skipped, summaries))
    return ReturnData(True, lines[len(rows)], (rows, skipped, summaries))
