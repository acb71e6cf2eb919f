"""Residue frames and frame-aware (geometric) attention over protein residues."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateBackbone, ShapeMismatch
from .layers import Layer, uniform_init, _flat

COLLINEAR_TOL = 1e-6
NORM_EPS = 1e-8


@dataclass(frozen=True)
class Frame:
    R: np.ndarray
    t: np.ndarray

    def apply(self, x):
        return np.asarray(x) @ self.R.T + self.t

    def invert_apply(self, x):
        return (np.asarray(x) - self.t) @ self.R

    def compose(self, other: "Frame") -> "Frame":
        return Frame(self.R @ other.R, self.R @ other.t + self.t)


def frames_from_backbone(N, CA, C):
    """Gram-Schmidt frame: x-axis along CA->C, N in the xy-plane, origin at CA.

    Accepts single atoms ``(3,)`` or stacked ``(r, 3)``; returns a Frame whose
    ``R``/``t`` carry the same leading shape.
    """
    N, CA, C = (np.asarray(a, dtype=np.float64) for a in (N, CA, C))
    u = C - CA
    w = N - CA
    nu = np.linalg.norm(u, axis=-1, keepdims=True)
    cross = np.cross(u, w)
    if np.any(nu < COLLINEAR_TOL) or np.any(np.linalg.norm(cross, axis=-1) < COLLINEAR_TOL * nu[..., 0]):
        raise DegenerateBackbone("N, CA and C are collinear or coincident")
    e1 = u / nu
    w_perp = w - np.sum(w * e1, axis=-1, keepdims=True) * e1
    e2 = w_perp / np.linalg.norm(w_perp, axis=-1, keepdims=True)
    e3 = np.cross(e1, e2)
    R = np.stack([e1, e2, e3], axis=-1)
    return Frame(R, CA.copy())


def stack_frames(frames):
    return Frame(np.stack([f.R for f in frames]), np.stack([f.t for f in frames]))


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class GeometricAttention(Layer):
    """Point-only attention between residue frames.

    Logits are ``-(gamma_h * w / 2) * sum_p |T_i q_ip - T_j k_jp|^2`` with
    ``w = sqrt(2 / (9 * n_query_points))``; value points are averaged in the
    global frame and mapped back into each residue's local frame.  The output
    projects the local points and their norms back to ``dim``.
    """

    def __init__(self, store, prefix, dim, heads, n_query_points, n_value_points, rng):
        super().__init__(store, prefix)
        self.heads = heads
        self.nq = n_query_points
        self.nv = n_value_points
        store.add(self._name("wq"), uniform_init(rng, (dim, heads * n_query_points * 3), dim))
        store.add(self._name("wk"), uniform_init(rng, (dim, heads * n_query_points * 3), dim))
        store.add(self._name("wv"), uniform_init(rng, (dim, heads * n_value_points * 3), dim))
        store.add(self._name("gamma_raw"), np.full(heads, math.log(math.e - 1.0)))
        feat = heads * n_value_points * 4
        store.add(self._name("wo"), uniform_init(rng, (feat, dim), feat))
        store.add(self._name("bo"), uniform_init(rng, (dim,), feat))
        self.w = math.sqrt(2.0 / (9.0 * n_query_points))

    @staticmethod
    def _to_global(pts, R, t):
        # pts [B, r, H, P, 3]; R [B, r, 3, 3]; t [B, r, 3]
        return np.einsum("brxy,brhpy->brhpx", R, pts) + t[:, :, None, None, :]

    def forward(self, s, R, t):
        s = np.asarray(s)
        squeeze = s.ndim == 2
        if squeeze:
            s, R, t = s[None], np.asarray(R)[None], np.asarray(t)[None]
        B, r, _ = s.shape
        if R.shape[-3] != r or t.shape[-2] != r or r < 1:
            raise ShapeMismatch(f"{r} residues but {R.shape[-3]} rotations / {t.shape[-2]} translations")
        H, P, V = self.heads, self.nq, self.nv
        R = np.broadcast_to(R, (B, r, 3, 3)).astype(s.dtype)
        t = np.broadcast_to(t, (B, r, 3)).astype(s.dtype)
        self.s, self.R, self.t, self.squeeze = s, R, t, squeeze
        qg = self._to_global((s @ self.p("wq")).reshape(B, r, H, P, 3), R, t)
        kg = self._to_global((s @ self.p("wk")).reshape(B, r, H, P, 3), R, t)
        vg = self._to_global((s @ self.p("wv")).reshape(B, r, H, V, 3), R, t)
        # head-major flattened points: [B, H, r, P*3]
        qf = qg.transpose(0, 2, 1, 3, 4).reshape(B, H, r, P * 3)
        kf = kg.transpose(0, 2, 1, 3, 4).reshape(B, H, r, P * 3)
        vf = vg.transpose(0, 2, 1, 3, 4).reshape(B, H, r, V * 3)
        d2 = (np.sum(qf * qf, -1)[..., :, None] + np.sum(kf * kf, -1)[..., None, :]
              - 2.0 * qf @ kf.transpose(0, 1, 3, 2))
        gamma = softplus(self.p("gamma_raw")).astype(s.dtype)
        coef = (-0.5 * self.w * gamma)[None, :, None, None]
        logits = coef * d2
        logits = logits - logits.max(-1, keepdims=True)
        e = np.exp(logits)
        a = e / e.sum(-1, keepdims=True)
        og = (a @ vf).reshape(B, H, r, V, 3).transpose(0, 2, 1, 3, 4)  # [B, r, H, V, 3]
        o = np.einsum("brxy,brhvx->brhvy", R, og - t[:, :, None, None, :])
        nrm = np.sqrt(np.sum(o * o, -1) + NORM_EPS)
        feat = np.concatenate([o.reshape(B, r, H * V * 3), nrm.reshape(B, r, H * V)], axis=-1)
        self.qf, self.kf, self.vf, self.d2, self.a = qf, kf, vf, d2, a
        self.o, self.nrm, self.feat, self.gamma, self.coef = o, nrm, feat, gamma, coef
        out = feat @ self.p("wo") + self.p("bo")
        return out[0] if squeeze else out

    def backward(self, dy):
        if self.squeeze:
            dy = dy[None]
        B, r, _ = self.s.shape
        H, P, V = self.heads, self.nq, self.nv
        R, t, a = self.R, self.t, self.a
        self.g("wo")[...] += _flat(self.feat).T @ _flat(dy)
        self.g("bo")[...] += _flat(dy).sum(0)
        dfeat = dy @ self.p("wo").T
        do = dfeat[..., : H * V * 3].reshape(B, r, H, V, 3)
        dn = dfeat[..., H * V * 3:].reshape(B, r, H, V)
        do = do + (dn / self.nrm)[..., None] * self.o
        dog = np.einsum("brxy,brhvy->brhvx", R, do)
        dogf = dog.transpose(0, 2, 1, 3, 4).reshape(B, H, r, V * 3)
        da = dogf @ self.vf.transpose(0, 1, 3, 2)
        dvf = a.transpose(0, 1, 3, 2) @ dogf
        dlog = a * (da - np.sum(da * a, -1, keepdims=True))
        sig = 1.0 / (1.0 + np.exp(-self.p("gamma_raw")))
        dgamma = np.sum(dlog * self.d2, axis=(0, 2, 3)) * (-0.5 * self.w)
        self.g("gamma_raw")[...] += dgamma * sig
        dd2 = dlog * self.coef
        rows = dd2.sum(-1)[..., None]
        cols = dd2.sum(-2)[..., None]
        dqf = 2.0 * (rows * self.qf - dd2 @ self.kf)
        dkf = 2.0 * (cols * self.kf - dd2.transpose(0, 1, 3, 2) @ self.qf)

        def local(dgf, n_pts):
            dg = dgf.reshape(B, H, r, n_pts, 3).transpose(0, 2, 1, 3, 4)
            return np.einsum("brxy,brhpx->brhpy", R, dg).reshape(B, r, H * n_pts * 3)

        dq, dk, dv = local(dqf, P), local(dkf, P), local(dvf, V)
        s = self.s
        self.g("wq")[...] += _flat(s).T @ _flat(dq)
        self.g("wk")[...] += _flat(s).T @ _flat(dk)
        self.g("wv")[...] += _flat(s).T @ _flat(dv)
        ds = dq @ self.p("wq").T + dk @ self.p("wk").T + dv @ self.p("wv").T
        return ds[0] if self.squeeze else ds
