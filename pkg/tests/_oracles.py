"""Independent brute-force oracles used to freeze expected values.

None of these share code paths with the package under test.
"""

import itertools
from fractions import Fraction

import numpy as np


def random_spd(rng, n, low=0.5, high=2.0):
    """SPD matrix with eigenvalues uniform in [low, high]."""
    A = rng.standard_normal((n, n))
    U, _ = np.linalg.qr(A)
    return U @ np.diag(rng.uniform(low, high, n)) @ U.T


def affine_basis(mu):
    """Particular solution and orthonormal null-space basis for {w : mu'w = p, 1'w = 1}."""
    n = len(mu)
    C = np.vstack([mu, np.ones(n)])
    _, _, vt = np.linalg.svd(C)
    return C, vt[2:].T


def grid_minimize_affine(hessian, linear, mu, p, points=201, zooms=8):
    """Minimize 1/2 x'Hx - linear'x on {mu'x = p, 1'x = 1} by zooming grid search."""
    C, N = affine_basis(np.asarray(mu, float))
    x0 = np.linalg.lstsq(C, np.array([p, 1.0]), rcond=None)[0]
    d = N.shape[1]
    if d == 0:
        return x0

    def f(T):
        X = x0[None, :] + T @ N.T
        return 0.5 * np.einsum("ij,jk,ik->i", X, hessian, X) - X @ linear

    # bound the optimum: 1/2 lmin |x|^2 - |linear||x| <= f(x0)
    lmin = np.linalg.eigvalsh(hessian).min()
    f0 = f(np.zeros((1, d)))[0]
    g = np.linalg.norm(linear)
    radius = (g + np.sqrt(g * g + 2 * lmin * (f0 + 0.0))) / lmin + np.linalg.norm(x0)
    center = np.zeros(d)
    half = radius
    pts = points if d == 1 else 81
    for _ in range(zooms + (10 if d > 1 else 0)):
        axes = [np.linspace(c - half, c + half, pts) for c in center]
        T = np.array(list(itertools.product(*axes))) if d > 1 else axes[0][:, None]
        best = T[np.argmin(f(T))]
        center = best
        half = half * (8.0 / pts if d == 1 else 0.25)
    return x0 + N @ center


def constraint_plane_projection(x, mu, p):
    C = np.vstack([mu, np.ones(len(mu))])
    b = np.array([p, 1.0])
    return x - C.T @ np.linalg.solve(C @ C.T, C @ x - b)


def joint_quadratic_optimum(Qs, cs):
    """argmax sum_a -1/2 (x-c_a)'Q_a(x-c_a), unconstrained."""
    H = sum(Qs)
    return np.linalg.solve(H, sum(Q @ c for Q, c in zip(Qs, cs)))


def joint_quadratic_optimum_simplex(Qs, cs, tol=1e-10):
    """Same on the probability simplex by enumerating supports and checking KKT."""
    H = sum(Qs)
    b = sum(Q @ c for Q, c in zip(Qs, cs))
    n = len(b)
    for size in range(1, n + 1):
        for S in itertools.combinations(range(n), size):
            S = list(S)
            k = len(S)
            K = np.zeros((k + 1, k + 1))
            K[:k, :k] = H[np.ix_(S, S)]
            K[:k, k] = 1.0
            K[k, :k] = 1.0
            sol = np.linalg.solve(K, np.concatenate([b[S], [1.0]]))
            xS, nu = sol[:k], sol[k]
            if np.any(xS < -tol):
                continue
            x = np.zeros(n)
            x[S] = xS
            # stationarity: H x - b + nu 1 - s = 0 with s >= 0 off support
            slack = H @ x - b + nu
            if np.all(slack[[i for i in range(n) if i not in S]] >= -tol):
                return x
    raise AssertionError("no KKT point found")


def simplex_projection_bisection(v, iters=200):
    """Projection onto the simplex by bisection on the shift theta."""
    v = np.asarray(v, float)
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi), 0)


def compound_values(month_end_prices, weights, initial):
    """Spreadsheet-style: buy shares at each month-end, mark to the next."""
    values = [initial]
    for t in range(len(weights)):
        cash = values[-1]
        total = 0.0
        for j, w in enumerate(weights[t]):
            shares = cash * w / month_end_prices[t][j]
            total += shares * month_end_prices[t + 1][j]
        values.append(total)
    return values


def exact_two_asset_weights(mu, p):
    """Exact rational solution of the 2-asset budget/return system for float inputs."""
    a, b, q = (Fraction(float(x)) for x in (mu[0], mu[1], p))
    w2 = (q - a) / (b - a)
    return float(1 - w2), float(w2)


def finite_difference_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g
