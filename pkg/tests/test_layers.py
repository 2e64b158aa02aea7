import numpy as np
import pytest

from mtseq import layers as L
from mtseq import tensor as T
from mtseq.errors import ShapeError
from mtseq.tensor import Tensor

from conftest import assert_gradients_match

SMALL = L.LayerDims(embed=3, enc_hidden=2, attn_hidden=4, dec_hidden=4)


def zero_like_set(params):
    return {k: Tensor(np.zeros_like(v.data), requires_grad=True) for k, v in params.items()}


def rand_set(builder, seed, *args):
    return builder(np.random.default_rng(seed), *args)


class TestLstmCell:
    def test_zero_params_zero_cell(self):
        p = zero_like_set(rand_set(L.lstm_param_set, 0, 3, 2, "fwd"))
        h, c = L.lstm_cell(Tensor([[1.0, -1.0, 2.0]]), Tensor([[0.0, 0.0]]),
                           Tensor([[0.0, 0.0]]), p, "fwd")
        np.testing.assert_array_equal(h.data, [[0.0, 0.0]])
        np.testing.assert_array_equal(c.data, [[0.0, 0.0]])

    def test_zero_params_carry_cell(self):
        p = zero_like_set(rand_set(L.lstm_param_set, 0, 3, 2, "fwd"))
        v = np.array([[0.4, -0.8]])
        h, c = L.lstm_cell(Tensor([[1.0, 2.0, 3.0]]), Tensor([[0.0, 0.0]]),
                           Tensor(v), p, "fwd")
        np.testing.assert_allclose(c.data, 0.5 * v, rtol=1e-6)
        np.testing.assert_allclose(h.data, 0.5 * np.tanh(0.5 * v), rtol=1e-6)

    def test_gradients(self, f64):
        p = rand_set(L.lstm_param_set, 1, 4, 4, "fwd")
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
        h = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
        c = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
        everything = dict(p, x=x, h=h, c=c)

        def loss():
            h2, c2 = L.lstm_cell(x, h, c, p, "fwd")
            return (T.mul(h2, h2).sum() + c2.sum())

        assert_gradients_match(loss, everything, tol=1e-4)


class TestGruCell:
    def test_zero_params_zero_state(self):
        p = zero_like_set(rand_set(L.gru_param_set, 0, 3, 2, "g"))
        h = L.gru_cell(Tensor([[1.0, 2.0, 3.0]]), Tensor([[0.0, 0.0]]), p, "g")
        np.testing.assert_array_equal(h.data, [[0.0, 0.0]])

    def test_gradients(self, f64):
        p = rand_set(L.gru_param_set, 3, 3, 4, "g")
        rng = np.random.default_rng(4)
        x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        h = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
        everything = dict(p, x=x, h=h)
        assert_gradients_match(
            lambda: L.gru_cell(x, h, p, "g").sum(), everything, tol=1e-4
        )


class TestEncode:
    def test_single_token_shape(self):
        p = rand_set(L.encoder_param_set, 5, SMALL, 7)
        out = L.encode([3], p)
        assert out.shape == (1, SMALL.annotation)

    @pytest.mark.parametrize("length", [1, 2, 5, 9])
    def test_shape_law(self, length):
        p = rand_set(L.encoder_param_set, 6, SMALL, 7)
        out = L.encode(list(range(length % 7, length % 7 + 1)) * length, p)
        assert out.shape == (length, SMALL.annotation)

    def test_zero_params_zero_annotations(self):
        p = zero_like_set(rand_set(L.encoder_param_set, 7, SMALL, 7))
        out = L.encode([1, 2, 3], p)
        np.testing.assert_array_equal(out.data, np.zeros((3, SMALL.annotation)))

    def test_empty_input(self):
        p = rand_set(L.encoder_param_set, 8, SMALL, 7)
        with pytest.raises(ShapeError):
            L.encode([], p)

    def test_reversal_mirrors_directions(self):
        # running the backward direction over x equals running the forward
        # direction over reversed(x) with the direction parameters swapped
        p = rand_set(L.encoder_param_set, 9, SMALL, 7)
        swapped = {}
        for key, t in p.items():
            if key.startswith("fwd."):
                swapped["bwd." + key[4:]] = t
            elif key.startswith("bwd."):
                swapped["fwd." + key[4:]] = t
            else:
                swapped[key] = t
        ids = [2, 5, 1]
        h = SMALL.enc_hidden
        ann = L.encode(ids, p).data
        ann_rev = L.encode(ids[::-1], swapped).data
        for j in range(len(ids)):
            np.testing.assert_array_equal(ann[j, h:], ann_rev[len(ids) - 1 - j, :h])

    def test_determinism(self):
        p = rand_set(L.encoder_param_set, 10, SMALL, 7)
        a = L.encode([1, 4, 2, 0], p).data
        b = L.encode([1, 4, 2, 0], p).data
        assert a.tobytes() == b.tobytes()


class TestAttend:
    def test_single_row_gets_full_weight(self):
        p = rand_set(L.attention_param_set, 11, SMALL)
        rng = np.random.default_rng(12)
        h0 = rng.normal(size=(1, SMALL.annotation)).astype(np.float32)
        s = Tensor(rng.normal(size=(1, SMALL.dec_hidden)))
        alpha, context = L.attend(s, Tensor(h0), p)
        np.testing.assert_array_equal(alpha.data, [[1.0]])
        np.testing.assert_array_equal(context.data, h0)

    def test_identical_rows_give_that_row(self):
        p = rand_set(L.attention_param_set, 13, SMALL)
        rng = np.random.default_rng(14)
        row = rng.normal(size=SMALL.annotation).astype(np.float32)
        annotations = Tensor(np.tile(row, (4, 1)))
        s = Tensor(rng.normal(size=(1, SMALL.dec_hidden)))
        _, context = L.attend(s, annotations, p)
        np.testing.assert_allclose(context.data[0], row, rtol=1e-5, atol=1e-6)

    def test_zero_scorer_is_uniform(self):
        p = rand_set(L.attention_param_set, 15, SMALL)
        p["v"].data[:] = 0.0
        rng = np.random.default_rng(16)
        annotations = Tensor(rng.normal(size=(5, SMALL.annotation)))
        s = Tensor(rng.normal(size=(1, SMALL.dec_hidden)))
        alpha, _ = L.attend(s, annotations, p)
        np.testing.assert_allclose(alpha.data, np.full((1, 5), 0.2), rtol=1e-6)

    def test_weights_form_distribution_and_convex_hull(self):
        # 2-simplex membership solved directly on random 3-row cases
        p = rand_set(L.attention_param_set, 17, SMALL)
        rng = np.random.default_rng(18)
        for _ in range(10):
            annotations = Tensor(rng.normal(size=(3, SMALL.annotation)))
            s = Tensor(rng.normal(size=(1, SMALL.dec_hidden)))
            alpha, context = L.attend(s, annotations, p)
            assert np.all(alpha.data >= 0)
            assert abs(alpha.data.sum() - 1.0) <= 1e-6
            a = np.vstack([annotations.data.T, np.ones(3)])
            b = np.concatenate([context.data[0], [1.0]])
            w, *_ = np.linalg.lstsq(a.astype(np.float64), b.astype(np.float64), rcond=None)
            assert np.all(w >= -1e-4)
            np.testing.assert_allclose(a @ w, b, atol=1e-4)

    def test_empty_annotations_raise(self):
        p = rand_set(L.attention_param_set, 19, SMALL)
        with pytest.raises(ShapeError):
            L.attend(Tensor(np.zeros((1, SMALL.dec_hidden))),
                     Tensor(np.zeros((0, SMALL.annotation))), p)

    def test_gradients(self, f64):
        p = rand_set(L.attention_param_set, 20, SMALL)
        rng = np.random.default_rng(21)
        annotations = Tensor(rng.normal(size=(3, SMALL.annotation)), requires_grad=True)
        s = Tensor(rng.normal(size=(1, SMALL.dec_hidden)), requires_grad=True)
        everything = dict(p, annotations=annotations, s=s)

        def loss():
            alpha, context = L.attend(s, annotations, p)
            return T.mul(context, context).sum() + T.mul(alpha, alpha).sum()

        assert_gradients_match(loss, everything, tol=1e-4)


class TestCondGru:
    def build(self, seed):
        rng = np.random.default_rng(seed)
        dec = L.decoder_param_set(rng, SMALL, 6)
        att = L.attention_param_set(rng, SMALL)
        return dec, att

    def test_zero_params_zero_state(self):
        dec, att = self.build(22)
        dec = zero_like_set(dec)
        att = zero_like_set(att)
        rng = np.random.default_rng(23)
        annotations = Tensor(rng.normal(size=(3, SMALL.annotation)))
        y = Tensor(rng.normal(size=(1, SMALL.embed)))
        s = Tensor(np.zeros((1, SMALL.dec_hidden)))
        s_new, _, _ = L.cond_gru_step(y, s, annotations, dec, att)
        np.testing.assert_array_equal(s_new.data, np.zeros((1, SMALL.dec_hidden)))

    def test_context_matches_standalone_attend(self):
        dec, att = self.build(24)
        rng = np.random.default_rng(25)
        annotations = Tensor(rng.normal(size=(4, SMALL.annotation)))
        y = Tensor(rng.normal(size=(1, SMALL.embed)))
        s = Tensor(rng.normal(size=(1, SMALL.dec_hidden)))
        _, context, _ = L.cond_gru_step(y, s, annotations, dec, att)
        mid = L.gru_cell(y, s, dec, "gru1")
        _, expected = L.attend(mid, annotations, att)
        assert context.data.tobytes() == expected.data.tobytes()

    def test_gradients(self, f64):
        dec, att = self.build(26)
        rng = np.random.default_rng(27)
        annotations = Tensor(rng.normal(size=(2, SMALL.annotation)), requires_grad=True)
        y = Tensor(rng.normal(size=(1, SMALL.embed)), requires_grad=True)
        s = Tensor(rng.normal(size=(1, SMALL.dec_hidden)), requires_grad=True)
        everything = dict(dec, **{f"att.{k}": v for k, v in att.items()})
        everything.update(annotations=annotations, y=y, s=s)

        def loss():
            s_new, context, _ = L.cond_gru_step(y, s, annotations, dec, att)
            return T.mul(s_new, s_new).sum() + context.sum()

        assert_gradients_match(loss, everything, tol=1e-4)


class TestInitDecoder:
    def test_zero_annotations(self):
        p = rand_set(L.decoder_param_set, 28, SMALL, 6)
        out = L.init_decoder(Tensor(np.zeros((3, SMALL.annotation))), p)
        np.testing.assert_array_equal(out.data, np.zeros((1, SMALL.dec_hidden)))

    def test_zero_weight(self):
        p = rand_set(L.decoder_param_set, 29, SMALL, 6)
        p["init.W"].data[:] = 0.0
        rng = np.random.default_rng(30)
        out = L.init_decoder(Tensor(rng.normal(size=(3, SMALL.annotation))), p)
        np.testing.assert_array_equal(out.data, np.zeros((1, SMALL.dec_hidden)))

    def test_single_row_mean(self):
        p = rand_set(L.decoder_param_set, 31, SMALL, 6)
        rng = np.random.default_rng(32)
        h0 = rng.normal(size=(1, SMALL.annotation)).astype(np.float32)
        out = L.init_decoder(Tensor(h0), p)
        expected = np.tanh(h0 @ p["init.W"].data)
        np.testing.assert_allclose(out.data, expected, rtol=1e-6)


class TestOutputLogits:
    def test_zero_params_uniform(self):
        p = zero_like_set(rand_set(L.output_param_set, 33, SMALL, 5))
        rng = np.random.default_rng(34)
        logits = L.output_logits(Tensor(rng.normal(size=(1, SMALL.dec_hidden))),
                                 Tensor(rng.normal(size=(1, SMALL.embed))),
                                 Tensor(rng.normal(size=(1, SMALL.annotation))), p)
        probs = T.softmax_rows(logits).data
        np.testing.assert_allclose(probs, np.full((1, 5), 0.2), rtol=1e-6)

    def test_antisymmetric_head(self):
        p = rand_set(L.output_param_set, 35, SMALL, 2)
        p["Wo"].data[:, 1] = -p["Wo"].data[:, 0]
        rng = np.random.default_rng(36)
        logits = L.output_logits(Tensor(rng.normal(size=(1, SMALL.dec_hidden))),
                                 Tensor(rng.normal(size=(1, SMALL.embed))),
                                 Tensor(rng.normal(size=(1, SMALL.annotation))), p).data
        np.testing.assert_allclose(logits[0, 0], -logits[0, 1], rtol=1e-5)

    def test_gradients(self, f64):
        p = rand_set(L.output_param_set, 37, SMALL, 3)
        rng = np.random.default_rng(38)
        s = Tensor(rng.normal(size=(2, SMALL.dec_hidden)), requires_grad=True)
        y = Tensor(rng.normal(size=(2, SMALL.embed)), requires_grad=True)
        c = Tensor(rng.normal(size=(2, SMALL.annotation)), requires_grad=True)
        everything = dict(p, s=s, y=y, c=c)
        assert_gradients_match(
            lambda: T.cross_entropy(L.output_logits(s, y, c, p), [0, 2]),
            everything, tol=1e-4,
        )


class TestBatchedEncoding:
    def test_padded_rows_match_unpadded(self):
        p = rand_set(L.encoder_param_set, 39, SMALL, 9)
        short = [4, 2]
        longer = [1, 3, 5, 6]
        ids = np.zeros((2, 4), dtype=np.int64)
        ids[0, :2] = short
        ids[1] = longer
        mask = np.array([[1, 1, 0, 0], [1, 1, 1, 1]], dtype=float)
        enc = L.encode_batch(ids, mask, p)
        solo = L.encode(short, p).data
        for j in range(2):
            np.testing.assert_allclose(
                enc.annotations.data[j * 2 + 0], solo[j], rtol=1e-5, atol=1e-6
            )

    def test_attention_ignores_padding(self):
        rng = np.random.default_rng(40)
        enc_p = L.encoder_param_set(rng, SMALL, 9)
        att_p = L.attention_param_set(rng, SMALL)
        ids = np.array([[4, 2, 0, 0], [1, 3, 5, 6]])
        mask = np.array([[1, 1, 0, 0], [1, 1, 1, 1]], dtype=float)
        enc = L.encode_batch(ids, mask, enc_p)
        s = Tensor(rng.normal(size=(2, SMALL.dec_hidden)))
        alpha, _ = L.attend(s, enc, att_p)
        assert np.all(alpha.data[0, 2:] == 0.0)
        np.testing.assert_allclose(alpha.data.sum(axis=1), 1.0, atol=1e-6)
