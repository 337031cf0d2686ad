"""Reference values for the unit tests.

Empirical kernels use torch autograd on explicitly written parameters.
Gaussian moments use 2-d quadrature rather than the closed form.
"""
import math

import numpy as np
import torch
from scipy import integrate

torch.set_default_dtype(torch.float64)


def mlp_layers(d_in, d_out, c_l, us, vs):
    w = d_in + d_out + 1
    Ws, bs = [], []
    for l, (u, v) in enumerate(zip(us, vs), start=1):
        if l == 1:
            W = torch.zeros(w, d_in)
            W[:d_in, :d_in] = c_l * torch.eye(d_in)
            W[d_in] = torch.tensor(u)
            b = torch.zeros(w)
            b[d_in + 1:] = c_l
        else:
            W = torch.zeros(w, w)
            W[:d_in, :d_in] = torch.eye(d_in)
            W[d_in, :d_in] = torch.tensor(u)
            W[d_in + 1:, d_in + 1:] = torch.eye(d_out)
            b = torch.zeros(w)
        b[d_in] = v
        Ws.append(W)
        bs.append(b)
    W = torch.zeros(d_out, w)
    W[:, d_in + 1:] = torch.eye(d_out)
    Ws.append(W)
    bs.append(-c_l * torch.ones(d_out))
    return Ws, bs


def mlp_ntk(Ws, bs, x, xp):
    params = [p.clone().requires_grad_(True) for pair in zip(Ws, bs) for p in pair]

    def f(inp):
        h = torch.tensor(inp)
        for k in range(0, len(params), 2):
            h = params[k] @ h + params[k + 1]
            if k + 2 < len(params):
                h = torch.relu(h)
        return h

    def jac(inp):
        out = f(inp)
        rows = []
        for i in range(out.shape[0]):
            g = torch.autograd.grad(out[i], params, retain_graph=True)
            rows.append(torch.cat([gi.T.reshape(-1) if gi.dim() == 2 else gi for gi in g]))
        return torch.stack(rows)

    return (jac(x) @ jac(xp).T).numpy()


def cnn_layers(c_l, us, vs):
    iota = torch.zeros(3, 3)
    iota[1, 1] = 1.0
    ws, bs = [], []
    for l, (u, v) in enumerate(zip(us, vs), start=1):
        n_in = 1 if l == 1 else 3
        w = torch.zeros(3, n_in, 3, 3)
        b = torch.zeros(3)
        if l == 1:
            w[0, 0] = c_l * iota
            w[1, 0] = torch.tensor(u)
            b[2] = c_l
        else:
            w[0, 0] = iota
            w[1, 0] = torch.tensor(u)
            w[2, 2] = iota
        b[1] = v
        ws.append(w)
        bs.append(b)
    w = torch.zeros(1, 3, 3, 3)
    w[0, 2] = iota
    ws.append(w)
    bs.append(torch.tensor([-c_l]))
    return ws, bs


def cnn_ntk(ws, bs, x, xp):
    params = [p.clone().requires_grad_(True) for pair in zip(ws, bs) for p in pair]

    def f(img):
        h = torch.tensor(img)[None, None]
        for k in range(0, len(params), 2):
            h = torch.nn.functional.conv2d(h, params[k], params[k + 1], padding=1)
            if k + 2 < len(params):
                h = torch.relu(h)
        return h.mean()

    def grad(img):
        return torch.cat([g.reshape(-1) for g in torch.autograd.grad(f(img), params)])

    return float(grad(x) @ grad(xp))


def relu_moment_quad(vu, vv, c):
    cov = np.array([[vu, c], [c, vv]])
    inv = np.linalg.inv(cov)
    norm = 1.0 / (2 * math.pi * math.sqrt(np.linalg.det(cov)))

    def integrand(b, a):
        z = np.array([a, b])
        return a * b * norm * math.exp(-0.5 * z @ inv @ z)

    val, _ = integrate.dblquad(integrand, 0, np.inf, 0, np.inf, epsabs=1e-13, epsrel=1e-12)
    return val


def cnn_limit_quad(x, xp, rho, beta):
    d = x.shape[0]

    def patch(img, i, j):
        p = np.zeros((3, 3))
        for a in range(3):
            for b in range(3):
                r, c = i + a - 1, j + b - 1
                if 0 <= r < d and 0 <= c < d:
                    p[a, b] = img[r, c]
        return p.reshape(-1)

    total = 0.0
    for s in range(3):
        for u in range(3):
            rows = [i for i in range(d) if 0 <= i + s - 1 < d]
            cols = [j for j in range(d) if 0 <= j + u - 1 < d]
            # pixels (i, j) whose shifted neighbour (i+s-1, j+u-1) is in bounds
            cells = [(i, j) for i in rows for j in cols]
            total += len(cells) ** 2 / d**4
            sx = sum(x[i + s - 1, j + u - 1] for i, j in cells) / d**2
            sxp = sum(xp[i + s - 1, j + u - 1] for i, j in cells) / d**2
            total += sx * sxp
            acc = 0.0
            for (i, j) in cells:
                for (k, m) in cells:
                    pa, pb = patch(x, i + s - 1, j + u - 1), patch(xp, k + s - 1, m + u - 1)
                    acc += relu_moment_quad(rho**2 * pa @ pa + beta**2, rho**2 * pb @ pb + beta**2,
                                            rho**2 * pa @ pb + beta**2)
            total += acc / d**4
    return total


def main():
    # MLP, d_in = 2, d_out = 1, L = 3.
    us = [[0.3, -0.7], [-0.4, 0.9]]
    vs = [0.2, -0.5]
    Ws, bs = mlp_layers(2, 1, 1.5, us, vs)
    k = mlp_ntk(Ws, bs, [0.6, 0.8], [0.5, -0.2])
    print("mlp_case_a raw", repr(k[0, 0]), "scaled", repr(k[0, 0] / (3 * 1.5**2)))

    # MLP, d_in = 2, d_out = 2, L = 4.
    us = [[0.5, 0.1], [-0.3, 0.2], [0.7, -1.1]]
    vs = [-0.1, 0.4, 0.3]
    Ws, bs = mlp_layers(2, 2, 2.0, us, vs)
    k = mlp_ntk(Ws, bs, [0.9, 0.1], [0.4, 0.7]) / (4 * 2.0**2)
    print("mlp_case_b scaled", [repr(v) for v in k.reshape(-1)])

    # Hand case: L = 2, C_L = 1, u = v = 0, x = x' = 1.
    Ws, bs = mlp_layers(1, 1, 1.0, [[0.0]], [0.0])
    print("mlp_hand raw", repr(mlp_ntk(Ws, bs, [1.0], [1.0])[0, 0]))

    # CNN, d = 3, L = 3, C_L = 1.2.
    rng = np.random.default_rng(7)
    us = [rng.normal(size=(3, 3)).round(3).tolist() for _ in range(2)]
    vs = [0.25, -0.15]
    x = rng.uniform(-1, 1, size=(3, 3)).round(3)
    xp = rng.uniform(0, 1, size=(3, 3)).round(3)
    ws, bs = cnn_layers(1.2, us, vs)
    print("cnn_case_a us", us)
    print("cnn_case_a x", x.tolist(), "xp", xp.tolist())
    print("cnn_case_a scaled", repr(cnn_ntk(ws, bs, x, xp) / (3 * 1.2**2)))

    ws, bs = cnn_layers(1.0, [np.zeros((3, 3))], [0.0])
    print("cnn_hand raw", repr(cnn_ntk(ws, bs, np.ones((2, 2)), np.ones((2, 2)))))

    for args in [(1.0, 1.0, 0.3), (2.0, 0.5, -0.4), (1.0, 4.0, 1.9)]:
        print("moment", args, repr(relu_moment_quad(*args)))

    x = np.array([0.6, 0.3])
    xp = np.array([0.2, 0.9])
    rho, beta = 0.8, 1.3
    s = rho**2 / 2
    m = relu_moment_quad(s * x @ x + beta**2, s * xp @ xp + beta**2, s * x @ xp + beta**2)
    print("mlp_limit d_out=1", repr(x @ xp + 1 + m), "d_out=3", repr(x @ xp + 3 + m))

    x = np.array([[0.2, 0.7], [0.5, 0.1]])
    xp = np.array([[0.9, 0.3], [0.4, 0.6]])
    print("cnn_limit", repr(cnn_limit_quad(x, xp, 0.7, 0.9)))


if __name__ == "__main__":
    main()
