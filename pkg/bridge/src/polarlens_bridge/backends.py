"""Model-facing adapters for the exporters.

Each loader returns a plain callable so the exporters stay testable without
the heavyweight model libraries installed: tests inject their own callables,
production runs load the pinned checkpoints here.
"""

from __future__ import annotations

import time

import numpy as np

from .manifest import BridgeError

SENTENCE_TRANSFORMER_NAMES = {
    "ml-minilm": "paraphrase-multilingual-MiniLM-L12-v2",
    "distil-muse": "distiluse-base-multilingual-cased-v2",
    "ml-mpnet": "paraphrase-multilingual-mpnet-base-v2",
    "labse": "sentence-transformers/LaBSE",
}


def load_encoder(manifest):
    """Load the real sentence encoder named by the manifest.

    Returns a callable mapping a list of texts to an (n, dim) float array.
    """
    name = SENTENCE_TRANSFORMER_NAMES.get(manifest.provider)
    if name is None:
        raise BridgeError(f"no encoder backend for provider {manifest.provider!r}")
    try:
        from sentence_transformers import SentenceTransformer
    except ImportError:
        raise BridgeError(
            "sentence-transformers is not installed; install the 'models' extra "
            "or pass an encoder explicitly"
        ) from None
    model = SentenceTransformer(name)

    def encode(texts):
        return np.asarray(model.encode(list(texts), show_progress_bar=False))

    return encode


def load_comet_generator(manifest):
    """Load a COMET-style seq2seq generator with greedy decoding.

    Returns a callable (english_text, relation_name) -> inference string.
    Greedy decoding keeps reruns byte-identical.
    """
    try:
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer
    except ImportError:
        raise BridgeError(
            "transformers is not installed; install the 'models' extra "
            "or pass a generator explicitly"
        ) from None
    tokenizer = AutoTokenizer.from_pretrained(manifest.revision)
    model = AutoModelForSeq2SeqLM.from_pretrained(manifest.revision)

    def generate(text, relation):
        prompt = f"{text} {relation} [GEN]"
        inputs = tokenizer(prompt, return_tensors="pt")
        out = model.generate(**inputs, do_sample=False, num_beams=1, max_new_tokens=24)
        return tokenizer.decode(out[0], skip_special_tokens=True).strip()

    return generate


class RateLimitError(Exception):
    """Transient throttling signal from a translation endpoint."""


def load_translator(manifest, url=None, session=None):
    """HTTP translation backend; POSTs {text, source, target} and expects JSON."""
    if url is None:
        raise BridgeError("translator backend needs an endpoint url")
    import requests

    session = session or requests.Session()

    def translate(text, src, tgt):
        resp = session.post(url, json={"text": text, "source": src, "target": tgt}, timeout=30)
        if resp.status_code == 429:
            raise RateLimitError(f"throttled by {url}")
        resp.raise_for_status()
        return resp.json()["translation"]

    return translate


def with_backoff(fn, retries=3, backoff_base=0.5, sleep=time.sleep):
    """Wrap a callable so RateLimitError triggers exponential-backoff retries."""

    def wrapped(*args, **kwargs):
        for attempt in range(retries + 1):
            try:
                return fn(*args, **kwargs)
            except RateLimitError:
                if attempt == retries:
                    raise
                sleep(backoff_base * (2 ** attempt))

    return wrapped
