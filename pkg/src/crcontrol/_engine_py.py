"""Pure-python hybrid integrator, the fallback for the compiled core.

Semantics match ``_engine_cy``: classical RK4 on a fine grid, trigger sign
changes located by bisection of partial RK4 steps, diagonal state jump at
each located crossing, optional delayed input read from the recorded
pre-delay output history.
"""


def run_hybrid(
    A,
    br,
    bv,
    x0,
    C,
    dr,
    cz,
    dz,
    cu,
    du,
    jump,
    detect,
    r_half,
    hf,
    nf,
    record_every,
    delay_fine,
    tol_fine,
    min_gap,
    out,
    u_hist,
    reset_times,
):
    """Integrate ``nf`` fine steps of size ``hf``; fill ``out``/``u_hist``.

    Returns ``(n_resets, n_suppressed)``. ``r_half`` holds the reference at
    half-step resolution (2*nf + 1 samples); ``out`` receives the output
    functionals every ``record_every`` fine steps.
    """
    x = x0.astype(float).copy()
    n_half = r_half.shape[0]

    def rval(pos):
        # pos in fine-step units; reference lives on the half-step grid
        p2 = 2.0 * pos
        i = int(p2)
        if i >= n_half - 1:
            return r_half[n_half - 1]
        w = p2 - i
        if w == 0.0:
            return r_half[i]
        return (1.0 - w) * r_half[i] + w * r_half[i + 1]

    def vval(pos):
        p = pos - delay_fine
        if p <= 0.0:
            return 0.0
        i = int(p)
        w = p - i
        if w == 0.0:
            return u_hist[i]
        return (1.0 - w) * u_hist[i] + w * u_hist[i + 1]

    if delay_fine > 0:

        def deriv(xs, pos):
            return A @ xs + br * rval(pos) + bv * vval(pos)

    else:

        def deriv(xs, pos):
            return A @ xs + br * rval(pos)

    def rk4(xs, pos, dt):
        h = dt * hf
        k1 = deriv(xs, pos)
        k2 = deriv(xs + (0.5 * h) * k1, pos + 0.5 * dt)
        k3 = deriv(xs + (0.5 * h) * k2, pos + 0.5 * dt)
        k4 = deriv(xs + h * k3, pos + dt)
        return xs + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def trig(xs, pos):
        return float(cz @ xs + dz * rval(pos))

    u_hist[0] = cu @ x + du * r_half[0]
    out[:, 0] = C @ x + dr * r_half[0]
    rec = 1
    last_reset = -(10**9)
    n_resets = 0
    n_supp = 0
    cap = reset_times.shape[0]

    for j in range(nf):
        z0 = trig(x, float(j))
        x_next = rk4(x, float(j), 1.0)
        z1 = trig(x_next, float(j + 1))
        if detect and (z0 * z1 < 0.0 or (z1 == 0.0 and z0 != 0.0)):
            if j - last_reset < min_gap or n_resets >= cap:
                n_supp += 1
            else:
                lo = 0.0
                zlo = z0
                hi = 1.0
                while hi - lo > tol_fine:
                    mid = 0.5 * (lo + hi)
                    zm = trig(rk4(x, float(j), mid), j + mid)
                    if zm == 0.0:
                        lo = mid
                        hi = mid
                    elif (zm > 0.0) == (zlo > 0.0):
                        lo = mid
                        zlo = zm
                    else:
                        hi = mid
                s = 0.5 * (lo + hi)
                xc = rk4(x, float(j), s)
                xc *= jump
                x_next = rk4(xc, j + s, 1.0 - s)
                reset_times[n_resets] = (j + s) * hf
                n_resets += 1
                last_reset = j
        x = x_next
        r1 = rval(float(j + 1))
        u_hist[j + 1] = cu @ x + du * r1
        if (j + 1) % record_every == 0:
            out[:, rec] = C @ x + dr * r1
            rec += 1
    return n_resets, n_supp
