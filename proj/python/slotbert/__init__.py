"""Object-centric video segmentation: recurrent slot attention with a
bidirectional temporal slot transformer, trained by masked feature
reconstruction plus a slot contrastive loss."""

import json as _json

try:  # installed wheel: the extension lives inside the package
    from ._slotbert import (  # noqa: F401
        Model,
        corloc,
        default_spec_json,
        fg_ari,
        gen_data,
        hard_spec_json,
        mbhd,
        mbo,
        patchify,
        slot_contrastive_loss,
    )
    from ._slotbert import evaluate as _evaluate
    from ._slotbert import train as _train
except ImportError:  # build tree: extension found via PYTHONPATH
    from _slotbert import (  # noqa: F401
        Model,
        corloc,
        default_spec_json,
        fg_ari,
        gen_data,
        hard_spec_json,
        mbhd,
        mbo,
        patchify,
        slot_contrastive_loss,
    )
    from _slotbert import evaluate as _evaluate
    from _slotbert import train as _train


def train(config_text, out_dir):
    """Train from flat key = value config text; returns a summary dict."""
    return dict(_train(config_text, out_dir))


def evaluate(ckpt, data_dir, repeats=0, matching=""):
    """Evaluate a checkpoint; returns the report as a dict."""
    return _json.loads(_evaluate(ckpt, data_dir, repeats, matching))
