"""TimeFlex: linear trend head plus a (optionally spectral) gated-convolution
seasonal branch, recombined by a learnable weighted sum."""
from __future__ import annotations

import numpy as np

from ..autodiff import ComplexTensor, Tensor, add, irdft, irdft2, mul, rdft, rdft2, scale, transpose
from ..autodiff.tensor import as_tensor
from .base import Forecaster
from .layers import conv, creshape, dc_block, post_process, revin_denormalize, revin_normalize, series_decompose, trend_head


class TimeFlex(Forecaster):
    kind = "timeflex"

    def build(self) -> None:
        cfg = self.config
        C, G, gc = cfg.C, cfg.groups, cfg.group_channels
        H, S, k = cfg.hidden_channels, cfg.skip_channels, cfg.kernel_size
        spectral = cfg.fft_mode != "none"
        L_trend = cfg.L_in if cfg.jpp else cfg.L_out

        if cfg.revin:
            self.constant("revin.gamma", np.ones(C))
            self.constant("revin.beta", np.zeros(C))

        if cfg.channel_mode == "ci":
            self.uniform("trend.W", (C, cfg.L_in, L_trend), cfg.L_in)
            self.constant("trend.b", np.zeros((C, L_trend)))
        else:
            self.uniform("trend.W", (cfg.L_in * C, L_trend * C), cfg.L_in * C)
            self.constant("trend.b", np.zeros(L_trend * C))

        self.conv_params("dc.lift", G, H, gc, k, spectral)
        for i, _ in enumerate(cfg.dilations):
            self.conv_params(f"dc.filter{i}", G, H, H, k, spectral)
            self.conv_params(f"dc.gate{i}", G, H, H, k, spectral)
            self.conv_params(f"dc.skip{i}", G, S, H, 1, spectral)

        if cfg.jpp:
            # seasonal skips are read out to the variate channels, summed with the
            # trend, and the shared real-valued post-processing follows
            self.conv_params("season.readout", G, gc, S, 1, spectral)
            self.conv_params("post.conv1", G, H, gc, 1)
            self.conv_params("post.conv2", G, gc, H, 1)
        else:
            self.conv_params("post.conv1", G, H, S, 1, spectral)
            self.conv_params("post.conv2", G, gc, H, 1, spectral)

        self.constant("mix.season", 1.0)
        self.constant("mix.trend", 1.0)

    # ------------------------------------------------------------------
    def _grouped(self, x: Tensor) -> Tensor:
        """[N, C, P] -> [N, G, gc, P]"""
        cfg = self.config
        return creshape(x, (x.shape[0], cfg.groups, cfg.group_channels, x.shape[-1]))

    def season_branch(self, seasonal: Tensor, training: bool, rng) -> Tensor:
        """[N, L_in, C] seasonal part -> [N, L, C] with L = L_out (or L_in for jpp)."""
        cfg, p = self.config, self.params
        N = seasonal.shape[0]
        s = transpose(seasonal, (0, 2, 1))  # [N, C, L_in]
        if cfg.fft_mode == "1d":
            z = rdft(s, axis=-1)
        elif cfg.fft_mode == "2d":
            z = rdft2(s, time_axis=-1, var_axis=1)
        else:
            z = s

        skip = dc_block(p, self._grouped(z), cfg.dilations)

        if cfg.jpp:
            y = conv(p, "season.readout", skip)
            n_time = cfg.L_in
        else:
            n_time = cfg.L_out
            target = n_time if cfg.fft_mode == "none" else n_time // 2 + 1
            y = post_process(p, skip, target, cfg.dropout, training, rng)
        y = creshape(y, (N, cfg.C, y.shape[-1]))

        if cfg.fft_mode == "1d":
            y = irdft(y, n_time, axis=-1)
        elif cfg.fft_mode == "2d":
            y = irdft2(y, n_time, time_axis=-1, var_axis=1)
        if cfg.fft_mode != "none" and n_time != cfg.L_in:
            # spectrum was computed from L_in samples; keep time-domain amplitude
            y = scale(y, n_time / cfg.L_in)
        return transpose(y, (0, 2, 1))

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        cfg, p = self.config, self.params
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[1:] != (cfg.L_in, cfg.C):
            raise ValueError(f"expected input [N, {cfg.L_in}, {cfg.C}], got {x.shape}")
        if cfg.revin:
            x, stats = revin_normalize(x, p["revin.gamma"], p["revin.beta"], cfg.revin_eps)
        seasonal, trend = series_decompose(x, cfg.ma_window, axis=1)
        trend_out = trend_head(trend, p["trend.W"], p["trend.b"], cfg.channel_mode)
        season_out = self.season_branch(seasonal, training, rng)
        out = add(mul(p["mix.season"], season_out), mul(p["mix.trend"], trend_out))
        if cfg.jpp:
            N = out.shape[0]
            y = self._grouped(transpose(out, (0, 2, 1)))
            y = post_process(p, y, cfg.L_out, cfg.dropout, training, rng)
            out = transpose(creshape(y, (N, cfg.C, cfg.L_out)), (0, 2, 1))
        if cfg.revin:
            out = revin_denormalize(out, stats, p["revin.gamma"], p["revin.beta"])
        return out


def timeflex_param_count(cfg) -> int:
    """Closed-form parameter count for a TimeFlex configuration."""
    C, G, gc = cfg.C, cfg.groups, cfg.group_channels
    H, S, k, nd = cfg.hidden_channels, cfg.skip_channels, cfg.kernel_size, len(cfg.dilations)
    cx = 2 if cfg.fft_mode != "none" else 1
    Lt = cfg.L_in if cfg.jpp else cfg.L_out
    n = 2 * C if cfg.revin else 0
    n += C * (cfg.L_in * Lt + Lt) if cfg.channel_mode == "ci" else (cfg.L_in * C) * (Lt * C) + Lt * C
    dc = (H * gc * k + H) + nd * (2 * (H * H * k + H) + (S * H + S))
    n += G * cx * dc
    if cfg.jpp:
        n += G * cx * (gc * S + gc) + G * ((H * gc + H) + (gc * H + gc))
    else:
        n += G * cx * ((H * S + H) + (gc * H + gc))
    return n + 2
