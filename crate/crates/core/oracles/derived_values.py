#!/usr/bin/env python3
"""Independent oracles for the frozen expected values used in the Rust tests.

Every value here is computed with numpy/scipy/sklearn primitives (or plain
arithmetic) rather than by calling into the Rust implementation. Run:

    python3 crates/core/oracles/derived_values.py

and compare against the constants in the unit tests.
"""

import math

import numpy as np
from scipy import stats
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.special import multigammaln
from scipy.linalg import sqrtm
from sklearn.metrics import adjusted_rand_score


def show(name, value):
    print(f"{name:55s} {value!r}")


def multigamma():
    # product formula, independent of the implementation's loop
    show("lmvgamma(p=1, x=2)", multigammaln(2.0, 1))
    show("lmvgamma(p=2, x=1.5)", multigammaln(1.5, 2))
    show("  log(pi/2)", math.log(math.pi / 2))
    show("lmvgamma(p=3, x=2)", multigammaln(2.0, 3))
    show("  log(pi^2/2)", math.log(math.pi**2 / 2))


def class_stats():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
    c = x - x.mean(axis=0)
    show("scatter of (1,0),(0,1),(-1,-1)", (c.T @ c).tolist())


def wishart_p1():
    # p = 1, sigma^2 = 1: Wishart(1, nu) is chi-square(nu)
    show("wishart p=1 s=2 nu=2", stats.chi2(2).logpdf(2.0))
    show("wishart p=1 s=1 nu=1", stats.chi2(1).logpdf(1.0))
    show("scipy wishart p=2", stats.wishart(df=5, scale=np.array([[2.0, 0.3], [0.3, 1.0]])).logpdf(
        np.array([[4.0, 1.0], [1.0, 3.0]])))


def singular_wishart_formula(s, sigma, nu):
    # re-implementation straight from the closed form, eigenvalues via numpy
    p = s.shape[0]
    lam = np.linalg.eigvalsh(s)
    nz = lam[lam > 1e-10 * max(lam.max(), 1.0)]
    a = len(nz)
    _, logdet_sigma = np.linalg.slogdet(sigma)
    return (-(nu * p / 2) * math.log(2)
            - (nu / 2) * logdet_sigma
            - multigammaln(nu / 2, a)
            + ((nu**2 - p * nu) / 2) * math.log(math.pi)
            + ((nu - p - 1) / 2) * np.log(nz).sum()
            - 0.5 * np.trace(np.linalg.solve(sigma, s)))


def singular_wishart():
    s = np.array([[1.0, 0.0], [0.0, 0.0]])
    show("singular wishart p=2 a=1 s=diag(1,0) I nu=1",
         singular_wishart_formula(s, np.eye(2), 1.0))
    s3 = np.array([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 0.0]])
    sig = np.array([[1.5, 0.2, 0.1], [0.2, 1.0, 0.0], [0.1, 0.0, 2.0]])
    show("singular wishart p=3 a=2 nu=2", singular_wishart_formula(s3, sig, 2.0))


def sqrt_example():
    show("sqrtm([[2,1],[1,2]])", np.real(sqrtm(np.array([[2.0, 1.0], [1.0, 2.0]]))).tolist())


def e_step_toy():
    # p = 1, classes s = 0.1 and s = 10 (n_i = 3), components 0.1 and 2, equal weights
    scat = [0.1, 10.0]
    comps = [0.1, 2.0]
    tau = []
    for s in scat:
        # product of normal densities about the class mean
        ll = [-(3 / 2) * math.log(2 * math.pi) - (3 / 2) * math.log(v) - 0.5 * s / v for v in comps]
        w = [0.5 * math.exp(l) for l in ll]
        tau.append([x / sum(w) for x in w])
    show("e-step toy tau", tau)


def adjust_toy():
    tau = np.array([[0.9, 0.1], [0.3, 0.7], [0.5, 0.5], [0.2, 0.8]])
    n = np.array([2, 3, 4, 3])
    f = (tau * n[:, None]).sum(axis=0) / (tau * (n[:, None] - 1)).sum(axis=0)
    show("adjust factors (n in {2,3,4})", f.tolist())


def hierarchical_toy():
    s = np.array([1.0, 1.1, 9.0, 9.2])
    roots = np.sqrt(s).reshape(-1, 1)
    z = linkage(roots, method="ward")
    lab = fcluster(z, 2, criterion="maxclust")
    out = []
    for c in sorted(set(lab), key=lambda c: list(lab).index(c)):
        members = lab == c
        out.append(s[members].sum() / (2 * members.sum()))
    show("ward init clusters", lab.tolist())
    show("ward init sigmas", out)


def ari_toy():
    show("ARI {1,1,2,2} vs {1,2,1,2}", adjusted_rand_score([1, 1, 2, 2], [1, 2, 1, 2]))
    show("ARI {0,0,1,1,2,2} vs {0,0,1,2,2,2}",
         adjusted_rand_score([0, 0, 1, 1, 2, 2], [0, 0, 1, 2, 2, 2]))


def lcda_scalar_toy():
    mu = [0.0, 3.0]
    tau = [[0.7, 0.3], [0.2, 0.8]]
    var = [1.0, 4.0]
    y = 1.2
    scores = []
    for i in range(2):
        dens = sum(tau[i][k] * stats.norm(mu[i], math.sqrt(var[k])).pdf(y) for k in range(2))
        scores.append(math.log(dens))
    show("lcda scalar toy scores", scores)


def qda_toy():
    a = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.5]])
    b = np.array([[5.0, 5.0], [6.0, 5.5], [5.0, 6.2], [6.5, 6.0]])
    y = np.array([0.5, 0.6])
    qda = []
    for x in (a, b):
        mu = x.mean(axis=0)
        cov = np.cov(x.T, ddof=1)
        qda.append(stats.multivariate_normal(mu, cov).logpdf(y))
    show("qda toy scores", qda)
    pooled = (np.cov(a.T, ddof=1) * 3 + np.cov(b.T, ddof=1) * 3) / 6
    lda = [stats.multivariate_normal(x.mean(axis=0), pooled).logpdf(y) for x in (a, b)]
    show("lda toy scores", lda)


def odds_toy():
    acc1 = np.array([0.8, 0.6, 0.9, 0.25])
    acc2 = np.array([0.5, 0.6, 0.75, 0.5])
    show("odds ratios", ((acc1 / (1 - acc1)) / (acc2 / (1 - acc2))).tolist())


if __name__ == "__main__":
    multigamma()
    class_stats()
    wishart_p1()
    singular_wishart()
    sqrt_example()
    e_step_toy()
    adjust_toy()
    hierarchical_toy()
    ari_toy()
    lcda_scalar_toy()
    qda_toy()
    odds_toy()
