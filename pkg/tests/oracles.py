"""Brute-force reference computations used by the tests.

Everything here enumerates complete frame labellings of a segment and sums
per-frame log-probabilities directly; none of it touches prefix sums, tail
sums or the package's normalization code.
"""

import itertools
import math


def _normalize(log_joint):
    m = max(v for v in log_joint if v != -math.inf)
    w = [math.exp(v - m) if v != -math.inf else 0.0 for v in log_joint]
    z = math.fsum(w)
    return [x / z for x in w]


def labelling_loglik(log_p, a, labels):
    return math.fsum(log_p[a + u][c] for u, c in enumerate(labels))


def tss_enumerate(log_p, a, b, l, r, prior=None):
    """Posterior over j in a+1..b and frame weights for frames a..b-1.

    ``prior`` maps candidate -> prior probability (uniform if None).
    Returns (candidates, posterior, weights) where weights[u] is a dict class -> mass.
    """
    L = b - a
    cands = list(range(a + 1, b + 1))
    log_joint, labellings = [], []
    for j in cands:
        lab = [l] * (j - a) + [r] * (b - j)
        pj = 1.0 / len(cands) if prior is None else prior[j]
        log_joint.append(labelling_loglik(log_p, a, lab) + (math.log(pj) if pj > 0 else -math.inf))
        labellings.append(lab)
    post = _normalize(log_joint)
    weights = []
    for u in range(L):
        w = {}
        for pj, lab in zip(post, labellings):
            w[lab[u]] = w.get(lab[u], 0.0) + pj
        weights.append(w)
    return cands, post, weights


def poisson_pmf(gap, mu):
    return math.exp(gap * math.log(mu) - mu - math.lgamma(gap + 1))


def gen_configurations(a, b, l, r, C, allow_c3, window=None):
    """All admissible (case, params, labelling, last_boundary) tuples."""
    out = []
    if l != r:
        for s in range(a + 1, b + 1):
            out.append(("C1", (s,), [l] * (s - a) + [r] * (b - s), s))
    for s1, s2 in itertools.combinations(range(a + 1, b + 1), 2):
        if window is not None and s2 - s1 > window:
            continue
        for c in range(C):
            if c in (l, r):
                continue
            lab = [l] * (s1 - a) + [c] * (s2 - s1) + [r] * (b - s2)
            out.append(("C2", (s1, s2, c), lab, s2))
    if l == r and allow_c3:
        out.append(("C3", (), [l] * (b - a), None))
    return out


def gen_case_masses(l, r, C, allow_c3):
    """Case-family prior masses renormalized over admissible families."""
    m1 = 1 / 3 if l != r else 0.0
    m3 = 1 / 3 if (l == r and allow_c3) else 0.0
    n_mid = sum(1 for c in range(C) if c not in (l, r))
    per_mid = (1 / (3 * (C - 2)) if l != r else 1 / (3 * (C - 1))) if n_mid else 0.0
    z = m1 + m3 + per_mid * n_mid
    return m1 / z, per_mid / z, m3 / z


def gen_enumerate(log_p, a, b, l, r, C, allow_c3, mu=None, beta_prev=0.0, window=None):
    """Exhaustive EM-Gen posterior.

    Position priors are Poisson (within-case normalized) when ``mu`` is given,
    otherwise uniform within each case. Returns a dict with case masses,
    per-config posteriors, frame weights and the expected last boundary.
    """
    configs = gen_configurations(a, b, l, r, C, allow_c3, window)
    m1, m2, m3 = gen_case_masses(l, r, C, allow_c3)

    def pos_weight(case, params):
        if mu is None:
            return 1.0
        if case == "C1":
            return poisson_pmf(params[0] - beta_prev, mu[l])
        if case == "C2":
            s1, s2, c = params
            return poisson_pmf(s1 - beta_prev, mu[l]) * poisson_pmf(s2 - s1, mu[c])
        return 1.0

    raw = [pos_weight(case, params) for case, params, _, _ in configs]
    # normalize positions within C1 and within each middle class of C2
    groups = {}
    for (case, params, _, _), w in zip(configs, raw):
        key = case if case != "C2" else ("C2", params[2])
        groups[key] = groups.get(key, 0.0) + w
    prior = []
    for (case, params, _, _), w in zip(configs, raw):
        key = case if case != "C2" else ("C2", params[2])
        mass = {"C1": m1, "C3": m3}.get(case, m2)
        prior.append(mass * w / groups[key])
    log_joint = [labelling_loglik(log_p, a, lab) + (math.log(p) if p > 0 else -math.inf)
                 for (_, _, lab, _), p in zip(configs, prior)]
    post = _normalize(log_joint)
    weights = []
    for u in range(b - a):
        w = {}
        for p, (_, _, lab, _) in zip(post, configs):
            w[lab[u]] = w.get(lab[u], 0.0) + p
        weights.append(w)
    beta = math.fsum(p * (beta_prev if last is None else last)
                     for p, (_, _, _, last) in zip(post, configs))
    case_mass = {"C1": 0.0, "C2": 0.0, "C3": 0.0}
    for p, (case, _, _, _) in zip(post, configs):
        case_mass[case] += p
    return {"configs": configs, "posterior": post, "weights": weights, "beta": beta,
            "case_mass": case_mass}


def levenshtein_reference(a, b):
    """Full-table edit distance."""
    n, m = len(a), len(b)
    D = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        D[i][0] = i
    for j in range(m + 1):
        D[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            D[i][j] = min(D[i - 1][j] + 1, D[i][j - 1] + 1,
                          D[i - 1][j - 1] + (0 if a[i - 1] == b[j - 1] else 1))
    return D[n][m]


def runs(labels):
    """(start, end, class) runs of a label list, pure Python."""
    out = []
    start = 0
    for t in range(1, len(labels) + 1):
        if t == len(labels) or labels[t] != labels[start]:
            out.append((start, t, labels[start]))
            start = t
    return out


def f1_reference(pred, gt, tau):
    """Exhaustive IoU table over every (pred, gt) pair, then the greedy rule:
    visit predictions left to right, take the best unmatched same-class
    ground-truth segment, count it if IoU >= tau."""
    P, G = runs(list(pred)), runs(list(gt))
    table = [[0.0] * len(G) for _ in P]
    for i, (ps, pe, pc) in enumerate(P):
        for k, (gs, ge, gc) in enumerate(G):
            if pc != gc:
                table[i][k] = -1.0
                continue
            inter = max(0, min(pe, ge) - max(ps, gs))
            union = max(pe, ge) - min(ps, gs)
            table[i][k] = inter / union
    used = set()
    tp = 0
    for i in range(len(P)):
        best, best_k = -1.0, None
        for k in range(len(G)):
            if k in used:
                continue
            if table[i][k] > best:
                best, best_k = table[i][k], k
        if best_k is not None and best >= tau:
            tp += 1
            used.add(best_k)
    fp = len(P) - tp
    fn = len(G) - tp
    if tp == 0:
        return 0.0
    prec, rec = tp / (tp + fp), tp / (tp + fn)
    return 100.0 * 2 * prec * rec / (prec + rec)


def max_matching_tp(pred, gt, tau):
    """Maximum number of one-to-one same-class pairs with IoU >= tau (exhaustive
    augmenting-path matching)."""
    P, G = runs(list(pred)), runs(list(gt))
    adj = []
    for ps, pe, pc in P:
        row = []
        for k, (gs, ge, gc) in enumerate(G):
            inter = max(0, min(pe, ge) - max(ps, gs))
            if pc == gc and inter / (max(pe, ge) - min(ps, gs)) >= tau:
                row.append(k)
        adj.append(row)
    match = {}

    def augment(i, seen):
        for k in adj[i]:
            if k in seen:
                continue
            seen.add(k)
            if k not in match or augment(match[k], seen):
                match[k] = i
                return True
        return False

    return sum(augment(i, set()) for i in range(len(P)))
