import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import dblquad

from raretail.errors import EstimationError, ProblemError
from raretail.oracle import oracle_radial
from raretail.problem import gauss_compose
from raretail.sampler import (Frame, HatPiModel, coverage, coverage_floor, gauss_tv_rate, hatpi_logpdf,
                              is_estimate, read_binary, sample, sample_general, tv_rate)
from raretail.streams import CHUNK
from raretail.symtensor import HMetric

from conftest import random_rotation


def model(d, lam, B=None, H=None, seed=0, frame=None):
    B = np.zeros((d, d)) if B is None else B
    H = np.eye(d) + B if H is None else H
    return HatPiModel(d, lam, HMetric.from_matrix(H), B, frame, seed)


def gauss_event(lam, beta=1.0):
    sl = math.sqrt(lam)
    return lambda u: u[:, -1] >= sl + 0.5 * beta * np.sum(u[:, :-1] ** 2, axis=1) / sl


def std_normal_logpdf(u):
    return -0.5 * u.shape[1] * math.log(2 * math.pi) - 0.5 * np.sum(u * u, axis=1)


class TestSample:
    def test_flat_t_mean(self):
        b = sample(model(2, 1e6, seed=1), 10 ** 5)
        t = b.points[:, -1]
        assert abs(t.mean() - 1e-6) <= 3 * t.std() / math.sqrt(t.size)

    def test_covariance(self):
        H = np.diag([1.0, 2.0, 4.0])
        b = sample(model(3, 100.0, H=H, seed=2), 10 ** 5)
        target = np.linalg.inv(100.0 * H)
        cov = np.cov(b.x_part.T)
        assert np.linalg.norm(cov - target) <= 0.1 * np.linalg.norm(target)
        assert np.all(np.abs(np.diag(cov) / np.diag(target) - 1) <= 0.1)

    def test_support(self):
        b = sample(model(3, 20.0, B=np.eye(3), seed=3), 20000)
        x, t = b.points[:, :3], b.points[:, 3]
        assert np.all(t >= 0.5 * np.sum(x * x, axis=1))
        assert np.all(b.y_part >= 0)
        assert np.array_equal(t, b.y_part + 0.5 * np.einsum("ij,jk,ik->i", x, np.eye(3), x))

    def test_deterministic_across_threads(self):
        m = model(4, 50.0, B=0.3 * np.eye(4), seed=11)
        a = sample(m, 3 * CHUNK + 17, threads=1)
        b = sample(m, 3 * CHUNK + 17, threads=3)
        assert np.array_equal(a.points, b.points)
        assert a.stream_count == 4

    def test_prefix_stable(self):
        m = model(2, 50.0, seed=5)
        assert np.array_equal(sample(m, CHUNK + 10).points[:CHUNK], sample(m, CHUNK).points)

    def test_seed_matters(self):
        assert not np.array_equal(sample(model(2, 50.0, seed=1), 10).points, sample(model(2, 50.0, seed=2), 10).points)

    def test_ks_marginals_d1(self):
        lam, b = 30.0, 0.6
        m = model(1, lam, B=np.array([[b]]), seed=8)
        s = sample(m, 10 ** 4)
        x, t = s.points[:, 0], s.points[:, 1]
        assert stats.kstest(x, "norm", args=(0, 1 / math.sqrt(lam * (1 + b)))).pvalue >= 0.01
        assert stats.kstest(t - 0.5 * b * x * x, "expon", args=(0, 1 / lam)).pvalue >= 0.01

    def test_n_zero(self):
        with pytest.raises(ProblemError):
            sample(model(2, 10.0), 0)


class TestGeneral:
    def test_identity_frame(self):
        m = model(3, 40.0, B=0.2 * np.eye(3), seed=4)
        mf = model(3, 40.0, B=0.2 * np.eye(3), seed=4, frame=Frame.identity(3))
        assert np.array_equal(sample(m, 5000).points, sample_general(mf, 5000).points)

    def test_gaussian_frame_mean(self):
        lam = 25.0
        m = HatPiModel.gaussian(np.zeros((2, 2)), lam, seed=6)
        last = sample_general(m, 10 ** 5).points[:, -1]
        expect = math.sqrt(lam) + 1 / math.sqrt(lam)
        assert abs(last.mean() - expect) <= 3 * last.std() / math.sqrt(last.size)

    def test_rotated_covariance(self, rng):
        d, lam = 3, 50.0
        U = random_rotation(rng, d + 1)
        frame = Frame(rng.standard_normal(d + 1), U[:, :d], U[:, d], 1.0)
        H = np.diag([1.0, 2.0, 3.0])
        m = model(d, lam, H=H, seed=7, frame=frame)
        pts = sample_general(m, 2 * 10 ** 5).points
        inner = np.zeros((d + 1, d + 1))
        inner[:d, :d] = np.linalg.inv(lam * H)
        inner[d, d] = 1 / lam ** 2
        target = U @ inner @ U.T
        assert np.linalg.norm(np.cov(pts.T) - target) <= 0.1 * np.linalg.norm(target)
        assert np.allclose(pts.mean(axis=0), frame.u_star + U[:, d] / lam, atol=0.01)

    def test_missing_frame(self):
        with pytest.raises(ProblemError):
            sample_general(model(2, 10.0), 10)

    def test_bad_frame(self):
        with pytest.raises(ProblemError):
            Frame(np.zeros(3), np.ones((3, 2)), np.array([0, 0, 1.0]))


class TestLogpdf:
    def test_mode(self):
        H = np.diag([1.5, 2.0])
        m = model(2, 10.0, B=np.diag([0.5, 1.0]), H=H)
        expect = math.log(10.0) + 0.5 * math.log(np.linalg.det(10.0 * H)) - math.log(2 * math.pi)
        assert hatpi_logpdf(m, np.zeros(3)) == pytest.approx(expect, rel=1e-14)

    def test_below_boundary(self):
        m = model(1, 10.0, B=np.array([[1.0]]))
        assert hatpi_logpdf(m, np.array([1.0, 0.4])) == -math.inf

    def test_normalized_d1(self):
        lam, b = 8.0, 0.7
        m = model(1, lam, B=np.array([[b]]))
        val, _ = dblquad(lambda t, x: math.exp(hatpi_logpdf(m, np.array([x, t]))), -3, 3,
                         lambda x: 0.5 * b * x * x, lambda x: 0.5 * b * x * x + 6, epsabs=1e-10)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_frame_jacobian(self):
        lam = 16.0
        m = HatPiModel.gaussian(np.zeros((1, 1)), lam)
        u = np.array([0.3, math.sqrt(lam) + 0.2])
        x, t = m.frame.to_canonical(u)
        direct = hatpi_logpdf(m, np.r_[x[0], t]) - 2 * math.log(math.sqrt(lam))
        assert hatpi_logpdf(m, u, original=True) == pytest.approx(direct)


class TestIS:
    def test_identity_target(self):
        m = model(2, 20.0, B=0.5 * np.eye(2), seed=3)
        est = is_estimate(m, lambda u: hatpi_logpdf(m, u), lambda u: np.ones(len(u), bool), 5000)
        assert est.log_p_hat == pytest.approx(0.0, abs=1e-12)
        assert est.std_err_log == pytest.approx(0.0, abs=1e-12)
        assert est.ess == pytest.approx(5000)

    def test_gaussian_quadratic(self):
        lam, d = 25.0, 3
        m = HatPiModel.gaussian(np.eye(d), lam, seed=12)
        est = is_estimate(m, std_normal_logpdf, gauss_event(lam), 10 ** 5)
        ref = oracle_radial(lambda r: r * r / 2, d, lam).log_p
        assert abs(est.log_p_hat - ref) <= 3 * est.std_err_log
        assert est.ess <= est.n

    def test_scaling(self):
        lam, d = 25.0, 2
        m = HatPiModel.gaussian(np.eye(d), lam, seed=13)
        a = is_estimate(m, std_normal_logpdf, gauss_event(lam), 20000, "standard")
        b = is_estimate(m, lambda u: std_normal_logpdf(u) + 3.0, gauss_event(lam), 20000, "standard")
        assert b.log_p_hat - a.log_p_hat == pytest.approx(3.0, abs=1e-10)
        c = is_estimate(m, std_normal_logpdf, gauss_event(lam), 20000)
        e = is_estimate(m, lambda u: std_normal_logpdf(u) + 3.0, gauss_event(lam), 20000)
        assert np.allclose(c.weights, e.weights, rtol=1e-12)
        assert c.weights.sum() == pytest.approx(1.0)

    def test_empty_set(self):
        m = model(2, 10.0)
        with pytest.raises(EstimationError):
            is_estimate(m, lambda u: np.zeros(len(u)), lambda u: np.zeros(len(u), bool), 100)

    def test_unknown_variant(self):
        with pytest.raises(EstimationError):
            is_estimate(model(1, 10.0), lambda u: np.zeros(len(u)), lambda u: np.ones(len(u), bool), 10, "x")


class TestCoverage:
    def test_support(self):
        c = coverage(model(2, 10.0, B=np.eye(2)), lambda u: np.ones(len(u), bool), 1000)
        assert c.fraction == 1.0

    def test_gaussian_identity(self):
        m = HatPiModel.gaussian(np.eye(4), 100.0, seed=14)
        c = coverage(m, gauss_event(100.0), 10 ** 5)
        assert c.fraction >= 0.99 and c.ci_low <= c.fraction <= c.ci_high

    def test_floor(self):
        assert 1 - coverage_floor(4, 1.0) == pytest.approx(2 * math.exp(-23 ** 2 * 2))
        assert coverage_floor(4, 100.0) == 1.0


class TestTV:
    def test_flat(self):
        _, db = gauss_compose(np.zeros((3, 3)), lam=100.0)
        assert tv_rate(db, 3, 100.0, 1) == pytest.approx(1 / 100 + 1 / 100)

    def test_all_zero(self):
        assert gauss_tv_rate(0, 0, 0, 4, 50.0) == pytest.approx(1 / 50)

    def test_quadratic_dominant(self):
        assert gauss_tv_rate(2.0, 0, 0, 10, 1e4) == pytest.approx(4 * 100 / 1e4 + 1e-4)


class TestExport:
    def test_csv(self, tmp_path):
        b = sample(model(2, 10.0, seed=1), 7)
        p = tmp_path / "s.csv"
        b.to_csv(p)
        lines = p.read_text().splitlines()
        assert lines[0] == "x1,x2,t" and len(lines) == 8
        assert np.array_equal(np.loadtxt(p, delimiter=",", skiprows=1), b.points)

    def test_binary(self, tmp_path):
        b = sample(model(3, 10.0, seed=2), 9)
        raw = b.to_bytes()
        assert raw[:4] == b"RTSB" and len(raw) == 16 + 9 * 4 * 8
        assert np.array_equal(read_binary(raw), b.points)
        p = tmp_path / "s.bin"
        b.to_binary(p)
        assert np.array_equal(read_binary(p), b.points)
