"""Engagement- and time-aware relevance scoring for a single article.

Two sub-scores are mixed by a learned gate: one driven purely by the
article content vector, the other by the engagement-cell embedding plus a
periodic encoding of hours elapsed since the article surfaced.  The mix
is then combined with a normalized click count through two trainable
scalar weights and squashed to (0, 1).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


class RelevancePredictor:
    def __init__(self, rng, d_news=256, dim_ue=32, d_time=16, dtype=None):
        if d_time < 1:
            raise ValueError("d_time must be at least 1")
        self.d_news = d_news
        self.dim_ue = dim_ue
        self.d_time = d_time
        self.dtype = dtype if dtype is not None else ad.DEFAULT_DTYPE

        def xav(fan_in, fan_out):
            return ad.xavier_uniform(rng, fan_in, fan_out, dtype=self.dtype)

        # One linear component, the rest sinusoidal.
        self.t2v_freq = ad.parameter(
            rng.uniform(-1.0, 1.0, size=(1, d_time)), name="rel.t2v_freq", dtype=self.dtype)
        self.t2v_phase = ad.parameter(
            rng.uniform(-1.0, 1.0, size=(1, d_time)), name="rel.t2v_phase", dtype=self.dtype)
        gate_in = d_news + dim_ue + d_time
        self.gate_w = ad.parameter(xav(gate_in, 1), name="rel.gate_w")
        self.gate_b = ad.parameter(np.zeros(1, dtype=self.dtype), name="rel.gate_b")
        self.content_w = ad.parameter(xav(d_news, 1), name="rel.content_w")
        self.content_b = ad.parameter(np.zeros(1, dtype=self.dtype), name="rel.content_b")
        self.engage_w = ad.parameter(xav(dim_ue + d_time, 1), name="rel.engage_w")
        self.engage_b = ad.parameter(np.zeros(1, dtype=self.dtype), name="rel.engage_b")
        self.w_clicks = ad.parameter(np.ones((1, 1), dtype=self.dtype), name="rel.w_clicks")
        self.w_mixed = ad.parameter(np.ones((1, 1), dtype=self.dtype), name="rel.w_mixed")

    def parameters(self):
        return {
            "rel.t2v_freq": self.t2v_freq, "rel.t2v_phase": self.t2v_phase,
            "rel.gate_w": self.gate_w, "rel.gate_b": self.gate_b,
            "rel.content_w": self.content_w, "rel.content_b": self.content_b,
            "rel.engage_w": self.engage_w, "rel.engage_b": self.engage_b,
            "rel.w_clicks": self.w_clicks, "rel.w_mixed": self.w_mixed,
        }

    def time2vec(self, elapsed_hours: float) -> ad.Tensor:
        """Periodic time embedding of shape (1, d_time).

        Component 0 is linear in the elapsed time, the others are
        sin(freq * t + phase), so they stay in [-1, 1] for any horizon.
        """
        z = ad.add(ad.scale(self.t2v_freq, float(elapsed_hours)), self.t2v_phase)
        if self.d_time == 1:
            return ad.slice_(z, cols=slice(0, 1))
        linear = ad.slice_(z, cols=slice(0, 1))
        periodic = ad.sin(ad.slice_(z, cols=slice(1, None)))
        return ad.concat([linear, periodic], axis=1)

    def relevance(self, news_vec: ad.Tensor, ue: ad.Tensor, t_el: ad.Tensor,
                  clicks_norm: float) -> ad.Tensor:
        """Score in (0, 1) for one (article, time) pair.

        ``clicks_norm`` is the snapshot click count squashed into [0, 1]
        upstream (log-scaled by the bucket maximum).
        """
        gate = ad.sigmoid(ad.affine(ad.concat([news_vec, ue, t_el], axis=1),
                                    self.gate_w, self.gate_b))
        r_content = ad.affine(news_vec, self.content_w, self.content_b)
        r_engage = ad.affine(ad.concat([ue, t_el], axis=1), self.engage_w, self.engage_b)
        mixed = ad.add(ad.mul(gate, r_content),
                       ad.mul(ad.add_scalar(ad.scale(gate, -1.0), 1.0), r_engage))
        return ad.sigmoid(ad.add(ad.scale(self.w_clicks, float(clicks_norm)),
                                 ad.mul(mixed, self.w_mixed)))
