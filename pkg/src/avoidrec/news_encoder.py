"""Title/category/entity news encoder.

Title tokens are embedded, contextualized with multi-head self-attention
over token positions, and pooled with additive attention; padding
positions are masked out of both attention stages.  The pooled title
vector is concatenated with a category embedding and a masked mean of
entity embeddings (zeros when entities are disabled or absent) and mixed
by a final dense layer into the news vector.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .corpus import NewsArticle, Vocabulary


class NewsEncoder:
    def __init__(self, n_words, n_categories, n_entities, rng,
                 d_word=300, d_news=256, n_heads=8, d_att=128,
                 d_cat=64, d_ent=64, use_entities=True,
                 word_init=None, word_trainable=True, dtype=None):
        if d_news % n_heads:
            raise ValueError(f"d_news={d_news} not divisible by n_heads={n_heads}")
        self.d_word = d_word
        self.d_news = d_news
        self.n_heads = n_heads
        self.d_head = d_news // n_heads
        self.d_cat = d_cat
        self.d_ent = d_ent
        self.use_entities = use_entities and n_entities > 0
        self.dtype = dtype if dtype is not None else ad.DEFAULT_DTYPE

        def xav(fan_in, fan_out):
            return ad.xavier_uniform(rng, fan_in, fan_out, dtype=self.dtype)

        if word_init is None:
            word_init = rng.uniform(-0.1, 0.1, size=(n_words, d_word))
            word_init[Vocabulary.pad_index] = 0.0
        elif word_init.shape != (n_words, d_word):
            raise ValueError(f"word_init shape {word_init.shape} != {(n_words, d_word)}")
        self.word_emb = ad.Tensor(word_init, requires_grad=word_trainable,
                                  name="news.word_emb", dtype=self.dtype)
        self.wq = ad.parameter(xav(d_word, d_news), name="news.wq")
        self.wk = ad.parameter(xav(d_word, d_news), name="news.wk")
        self.wv = ad.parameter(xav(d_word, d_news), name="news.wv")
        self.att_w = ad.parameter(xav(d_news, d_att), name="news.att_w")
        self.att_b = ad.parameter(np.zeros(d_att, dtype=self.dtype), name="news.att_b")
        self.att_q = ad.parameter(xav(d_att, 1), name="news.att_q")
        self.cat_emb = ad.parameter(
            rng.uniform(-0.1, 0.1, size=(max(n_categories, 1), d_cat)),
            name="news.cat_emb", dtype=self.dtype)
        if self.use_entities:
            self.ent_emb = ad.parameter(
                rng.uniform(-0.1, 0.1, size=(n_entities, d_ent)),
                name="news.ent_emb", dtype=self.dtype)
        else:
            self.ent_emb = None
        self.combine_w = ad.parameter(xav(d_news + d_cat + d_ent, d_news), name="news.combine_w")
        self.combine_b = ad.parameter(np.zeros(d_news, dtype=self.dtype), name="news.combine_b")

    def parameters(self):
        named = {
            "news.word_emb": self.word_emb,
            "news.wq": self.wq, "news.wk": self.wk, "news.wv": self.wv,
            "news.att_w": self.att_w, "news.att_b": self.att_b, "news.att_q": self.att_q,
            "news.cat_emb": self.cat_emb,
            "news.combine_w": self.combine_w, "news.combine_b": self.combine_b,
        }
        if self.ent_emb is not None:
            named["news.ent_emb"] = self.ent_emb
        return named

    def _contextualize(self, token_ids, mask):
        """Multi-head self-attention over token positions (keys masked at padding)."""
        x = ad.embedding_lookup(self.word_emb, token_ids)
        q = ad.matmul(x, self.wq)
        k = ad.matmul(x, self.wk)
        v = ad.matmul(x, self.wv)
        key_mask = np.broadcast_to(mask[None, :], (len(token_ids), len(token_ids)))
        heads = []
        for i in range(self.n_heads):
            cols = slice(i * self.d_head, (i + 1) * self.d_head)
            scores = ad.matmul(ad.slice_(q, cols=cols), ad.transpose(ad.slice_(k, cols=cols)))
            attn = ad.softmax(scores, axis=1, mask=key_mask)
            heads.append(ad.matmul(attn, ad.slice_(v, cols=cols)))
        return ad.concat(heads, axis=1)

    def _pool(self, contextual, mask):
        """Additive attention pooling over unmasked positions."""
        hidden = ad.tanh(ad.affine(contextual, self.att_w, self.att_b))
        scores = ad.matmul(hidden, self.att_q)
        alpha = ad.softmax(scores, axis=0, mask=mask[:, None])
        return ad.matmul(ad.transpose(alpha), contextual)

    def encode_title(self, title_tokens) -> ad.Tensor:
        """Title vector of shape (1, d_news); an all-padding title yields zeros."""
        token_ids = np.asarray(title_tokens, dtype=np.int64)
        mask = token_ids != Vocabulary.pad_index
        if not mask.any():
            return ad.constant(np.zeros((1, self.d_news)), dtype=self.dtype)
        return self._pool(self._contextualize(token_ids, mask), mask)

    def _entity_channel(self, entity_ids) -> ad.Tensor:
        if not self.use_entities or not entity_ids:
            return ad.constant(np.zeros((1, self.d_ent)), dtype=self.dtype)
        rows = ad.embedding_lookup(self.ent_emb, np.asarray(entity_ids, dtype=np.int64))
        weights = ad.constant(np.full((1, len(entity_ids)), 1.0 / len(entity_ids)),
                              dtype=self.dtype)
        return ad.matmul(weights, rows)

    def encode_news(self, article: NewsArticle) -> ad.Tensor:
        """Full news vector of shape (1, d_news)."""
        if not 0 <= article.category_id < self.cat_emb.data.shape[0]:
            raise IndexError(
                f"unknown category id {article.category_id} for article {article.news_id!r}")
        n_t = self.encode_title(article.title_tokens)
        n_cat = ad.embedding_lookup(self.cat_emb, np.array([article.category_id]))
        n_ent = self._entity_channel(article.entity_ids)
        return ad.affine(ad.concat([n_t, n_cat, n_ent], axis=1),
                         self.combine_w, self.combine_b)
