"""Composition of the encoders into one candidate scorer.

``AvoidanceAwareRanker`` owns every trainable tensor (news encoder, user
encoder, relevance predictor, engagement table) and scores the candidates
of one impression given pre-impression article features.  Three scoring
modes support component ablations:

* ``full``        -- gated mix of relevance score and user-candidate match;
* ``only_rel``    -- engagement vectors zeroed inside the user encoder
                     (the relevance branch keeps them);
* ``only_avoid``  -- the user-candidate match alone, relevance bypassed.

Users with an empty history skip the user encoder entirely and are scored
by the relevance branch in every mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .features import ArticleFeatures
from .grid import EngagementEmbeddingTable
from .news_encoder import NewsEncoder
from .relevance import RelevancePredictor
from .user_encoder import UserEncoder

MODES = ("full", "only_rel", "only_avoid")


@dataclass
class ModelConfig:
    d_word: int = 300
    d_news: int = 256
    n_heads: int = 8
    d_att: int = 128
    d_cat: int = 64
    d_ent: int = 64
    use_entities: bool = True
    word_trainable: bool = True
    max_title_len: int = 30
    dim_ue: int = 32
    grid_d: int = 5
    d_time: int = 16
    user_heads: int = 4
    cnn_window: int = 1
    max_history: int = 50
    dtype: str = "float32"

    def numpy_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class VocabSizes:
    n_words: int
    n_categories: int
    n_entities: int = 0

    @classmethod
    def from_corpus(cls, catalog, vocab):
        return cls(n_words=len(vocab), n_categories=max(len(catalog.categories), 1),
                   n_entities=len(catalog.entities))


class AvoidanceAwareRanker:
    def __init__(self, config: ModelConfig, sizes: VocabSizes, seed: int = 0,
                 word_init: np.ndarray | None = None):
        self.config = config
        self.sizes = sizes
        dtype = config.numpy_dtype()
        rng = np.random.default_rng(seed)
        self.news = NewsEncoder(
            sizes.n_words, sizes.n_categories, sizes.n_entities, rng,
            d_word=config.d_word, d_news=config.d_news, n_heads=config.n_heads,
            d_att=config.d_att, d_cat=config.d_cat, d_ent=config.d_ent,
            use_entities=config.use_entities, word_init=word_init,
            word_trainable=config.word_trainable, dtype=dtype)
        self.engagement = EngagementEmbeddingTable(
            config.grid_d, config.dim_ue, rng, dtype=dtype)
        self.relevance = RelevancePredictor(
            rng, d_news=config.d_news, dim_ue=config.dim_ue,
            d_time=config.d_time, dtype=dtype)
        self.user = UserEncoder(
            rng, d_news=config.d_news, dim_ue=config.dim_ue,
            n_heads=config.user_heads, cnn_window=config.cnn_window,
            max_history=config.max_history, dtype=dtype)
        self._zero_ue = ad.constant(np.zeros((1, config.dim_ue)), dtype=dtype)

    # -- parameter access ----------------------------------------------------

    def parameters(self) -> dict[str, ad.Tensor]:
        named = {}
        named.update(self.news.parameters())
        named["engagement.table"] = self.engagement.table
        named.update(self.relevance.parameters())
        named.update(self.user.parameters())
        return named

    def trainable_parameters(self) -> dict[str, ad.Tensor]:
        return {k: v for k, v in self.parameters().items() if v.requires_grad}

    def zero_grads(self):
        for p in self.parameters().values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, t in params.items():
            arr = np.asarray(state[name], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {t.data.shape}")
            t.data = arr.copy()

    # -- scoring ---------------------------------------------------------------

    def _engagement_vec(self, feat: ArticleFeatures, zeroed: bool) -> ad.Tensor:
        if zeroed:
            return self._zero_ue
        return self.engagement.lookup(feat.cell)

    def score_impression(self, history_articles, candidate_articles,
                         feats: dict[str, ArticleFeatures], mode: str = "full"):
        """Interest scores (list of (1,1) tensors) for each candidate.

        ``feats`` must cover every history and candidate article; history
        items beyond the model's window are dropped from the old end.
        """
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
        history_articles = list(history_articles)[-self.config.max_history:]
        encoded = {}
        for article in list(history_articles) + list(candidate_articles):
            if article.news_id not in encoded:
                encoded[article.news_id] = self.news.encode_news(article)

        def relevance_for(article):
            feat = feats[article.news_id]
            ue = self._engagement_vec(feat, zeroed=False)
            t_el = self.relevance.time2vec(feat.age_hours)
            return self.relevance.relevance(encoded[article.news_id], ue, t_el,
                                            feat.clicks_norm)

        if not history_articles:
            # Cold user: the relevance branch is the only defined signal.
            return [relevance_for(article) for article in candidate_articles]

        zero_ue = mode == "only_rel"
        hist_vecs = [encoded[a.news_id] for a in history_articles]
        hist_ues = [self._engagement_vec(feats[a.news_id], zero_ue) for a in history_articles]
        hist, mask = self.user.augment_history(hist_vecs, hist_ues)

        scores = []
        for article in candidate_articles:
            cand = self.user.augment_item(
                encoded[article.news_id],
                self._engagement_vec(feats[article.news_id], zero_ue))
            attention_ctx = self.user.candidate_aware_self_attention(hist, cand, mask)
            local_ctx = self.user.candidate_aware_cnn(hist, cand, mask)
            user_vec = self.user.user_embedding(attention_ctx, local_ctx, cand, mask)
            if mode == "only_avoid":
                scores.append(self.user.preliminary_interest(cand, user_vec))
            else:
                scores.append(self.user.interest_score(cand, user_vec,
                                                       relevance_for(article)))
        return scores
