from __future__ import annotations

from classes.data_classes import ReturnData
from classes.routing_classes import coefficient_of_variation
from classes.typed_dictionaries import ExpertRow, RoutingSummary
from commands.utils import ensure_dir, model_from_args, pairs_from_args, restore
from engine.tensor_class import no_grad
from network.model import RestorationNetwork
from utils.log import log

import numpy as np
import os

REPORT_NAME = 'route_stats.txt'

def summarize_routing(model: RestorationNetwork, per_image_stats: list) -> list:
    """
    Sums W_n and S_n of every ADEC over all images (in image order)
    :param model: the network the stats came from
    :param per_image_stats: one list of RoutingStats per image, deepest ADEC first
    :return: list of RoutingSummary
    """
    summaries = []
    for position, stage in enumerate(model.adec_stages):
        confidence = np.zeros(model.cfg.experts, dtype=np.float64)
        selection = np.zeros(model.cfg.experts, dtype=np.float64)
        for stats in per_image_stats:
            confidence += stats[position].expert_confidence.data
            selection += stats[position].expert_selection
        name = f'adec{stage}'
        rows = [ExpertRow(adec=name, expert=n, confidence=float(confidence[n]), selections=float(selection[n]))
                for n in range(model.cfg.experts)]
        summaries.append(RoutingSummary(adec=name, confidence_cv=coefficient_of_variation(confidence),
                                        selection_cv=coefficient_of_variation(selection), experts=rows))
    return summaries

def format_routing(summaries: list) -> list:
    """
    Report lines: 'route <adec> expert <n> W <W_n> S <S_n>' then 'route <adec> cv_W <cv> cv_S <cv>'
    """
    lines = []
    for summary in summaries:
        for row in summary['experts']:
            lines.append(f"route {row['adec']} expert {row['expert']} W {row['confidence']:.6f} S {row['selections']:.0f}")
        lines.append(f"route {summary['adec']} cv_W {summary['confidence_cv']:.6f} cv_S {summary['selection_cv']:.6f}")
    return lines

def route_stats_def(out: str, checkpoint: str = None, config_path: str = None, image: str = None,
                    manifest: str = None, seed: int = None) -> ReturnData:
    """
    Per-expert routing totals of a trained (checkpoint) or untrained (config) network
    :param out: output directory, receives route_stats.txt
    :param checkpoint: checkpoint file
    :param config_path: config file, used when no checkpoint is given
    :param image: single PPM image
    :param manifest: manifest of images
    :param seed: initialisation seed of an untrained network
    :return: ReturnData with the list of RoutingSummary as data
    """
    log('route-stats', 'route_stats_def', [out, checkpoint, config_path, image, manifest, seed], log_type='function')
    try:
        model = model_from_args(checkpoint, config_path, seed)
        per_image = []
        with no_grad():
            for _, degraded, label, _ in pairs_from_args(image, manifest):
                per_image.append(restore(model, degraded, label)[1])
    except (ValueError, RuntimeError, OSError) as e:
        log('route-stats', f'route-stats failed: {e}', [checkpoint, config_path], log_type='error')
        return ReturnData(False, str(e))

    summaries = summarize_routing(model, per_image)
    lines = format_routing(summaries)
    with open(os.path.join(ensure_dir(out), REPORT_NAME), 'w', encoding='utf-8') as f:
        f.write('\n'.join(lines) + '\n')
    return ReturnData(True, '\n'.join(lines), summaries)
