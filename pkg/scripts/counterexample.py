"""Print the look-ahead counterexample: the exact table, then raw vs e-lifted stopped means.

    python scripts/counterexample.py
"""

from stopebh.adjuster import AdjusterSpec, LiftedProcess
from stopebh.eprocess import betting_process
from stopebh.session import peek_rule
from stopebh.simlab import Foreteller, enumerate_counterexample, enumerate_foreteller


def main():
    table = enumerate_counterexample()
    print(f"{'(Y1, Y2)':>10} {'M_1':>6} {'M_2':>6} {'tau':>4} {'M_tau':>6}")
    for r in table.rows:
        print(f"{f'({r.y1:+d}, {r.y2:+d})':>10} {float(r.m1):6.2f} {float(r.m2):6.2f} {r.tau:4d} {float(r.m_tau):6.2f}")
    print(f"E[M_tau] = {table.expectation} = {float(table.expectation)}\n")

    rule = peek_rule(1)
    spec = Foreteller(d=1)
    adjusters = [("raw", None), ("sqrt(x) - 1", AdjusterSpec("sqrt_minus_one"))]
    adjusters += [(f"k x^(1-k), k={k}", AdjusterSpec("power", k=k)) for k in (0.25, 0.5, 0.75)]
    for name, adj in adjusters:
        if adj is None:
            factory = lambda: [betting_process(), betting_process()]
        else:
            factory = lambda adj=adj: [LiftedProcess(betting_process(), adj) for _ in range(2)]
        ex = enumerate_foreteller(spec, 2, factory, rule, alpha=0.5)
        print(f"{name:>20}: exact E[stopped e-value of stream 1] = {ex.mean_evalues[0]:.6f}")


if __name__ == "__main__":
    main()
