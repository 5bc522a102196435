"""Command-line entry point: every study behind one ``mlab`` executable."""
import math
import sys

import click

from . import harness
from .errors import ConfigError, MlabError


def _common(fn):
    fn = click.option("--threads", type=int, default=None,
                      help="Worker processes (MLAB_THREADS wins over this).")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(file_okay=False),
                      default=".", show_default=True, help="Output directory.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Override the config seed.")(fn)
    fn = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                      default=None, help="Study config (JSON).")(fn)
    return fn


def _run(fn):
    try:
        return fn()
    except MlabError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(e.exit_code)


def _load(config_path, seed, expected_study):
    cfg = harness.load_config(config_path, seed_override=seed)
    if cfg.study != expected_study:
        raise ConfigError(
            f"config study {cfg.study!r} does not match this command "
            f"(expected {expected_study!r})")
    return cfg


def _require(config_path):
    if config_path is None:
        raise ConfigError("--config is required for this command")


def _fmt_b(b):
    return "none" if b is None or (isinstance(b, float) and math.isinf(b)) else str(b)


@click.group()
def main():
    """Metastability lab for clipped heavy-tailed SGD."""


@main.group()
def landscape():
    """Landscape inspection."""


@landscape.command("inspect")
@_common
def landscape_inspect(config_path, seed, out_dir, threads):
    """Report critical points and field widths of the configured landscape."""
    def go():
        cfg = None
        if config_path is not None:
            cfg = harness.load_config(config_path, seed_override=seed)
        result = harness.inspect_landscape(cfg, out_dir=out_dir)
        if hasattr(result, "minima"):
            click.echo(f"minima:  {[round(float(m), 6) for m in result.minima]}")
            click.echo(f"saddles: {[round(float(s), 6) for s in result.saddles]}")
            widths = [round(float(result.r(i)), 6) for i in range(1, result.n_min + 1)]
            click.echo(f"widths:  {widths}")
        else:
            click.echo(f"2-D landscape {result.name} with {len(result.attractors)} attractors")
        return result
    _run(go)


@main.group()
def graph():
    """Typical-transition-graph tools."""


@graph.command("build")
@_common
def graph_build(config_path, seed, out_dir, threads):
    """Build the transition graph for the configured clipping threshold."""
    def go():
        _require(config_path)
        cfg = _load(config_path, seed, "graph")
        g = harness.study_graph(cfg, out_dir=out_dir)
        click.echo(f"nodes {g.profile.n}, l* {list(map(int, g.profile.l_star))}")
        for cls, absorbing in zip(g.classes, g.absorbing):
            tag = "absorbing" if absorbing else "transient"
            click.echo(f"class {sorted(cls)}: {tag}")
        click.echo(f"irreducible={g.irreducible} symmetric={g.symmetric} "
                   f"m_large={sorted(g.m_large)}")
        return g
    _run(go)


@main.group()
def simulate():
    """SGD trajectory studies."""


@simulate.command("exit")
@_common
def simulate_exit(config_path, seed, out_dir, threads):
    """First-exit times over an eta grid with power-law fits."""
    def go():
        _require(config_path)
        cfg = _load(config_path, seed, "exit-scaling")
        res = harness.study_exit_scaling(cfg, out_dir=out_dir, threads=threads)
        for f in res.fits:
            pred = "n/a" if f.predicted is None else f"{f.predicted:.2f}"
            click.echo(f"b={_fmt_b(f.b)} l*={f.l_star}: slope {f.slope:.3f} "
                       f"+/- {f.slope_se:.3f} (predicted {pred}), "
                       f"censored {list(f.censored)}")
        return res
    _run(go)


@simulate.command("occupancy")
@_common
def simulate_occupancy(config_path, seed, out_dir, threads):
    """Visit-fraction histogram over the attraction fields."""
    def go():
        _require(config_path)
        cfg = _load(config_path, seed, "occupancy")
        res = harness.study_occupancy(cfg, out_dir=out_dir, threads=threads)
        click.echo(f"pooled counts {list(res.pooled)}")
        click.echo(f"small-field fraction {res.small_field_fraction:.4f} "
                   f"(outside m_large {list(res.m_large)}); "
                   f"start field {res.start_field} fraction "
                   f"{res.start_field_fraction:.4f}")
        return res
    _run(go)


@simulate.command("r2")
@_common
def simulate_r2(config_path, seed, out_dir, threads):
    """One long 2-D trajectory binned by attractor proximity."""
    def go():
        _require(config_path)
        cfg = _load(config_path, seed, "r2-sim")
        res = harness.study_r2(cfg, out_dir=out_dir, threads=threads)
        click.echo(f"counts {list(res.counts)} (label 0 = unclassified)")
        click.echo(f"first basin {res.first_basin}, visited {list(res.visited)}, "
                   f"omega1+omega2 fraction {res.omega12_fraction:.4f}")
        return res
    _run(go)


@main.group()
def limit():
    """Rate constants and the limiting Markov chain."""


@limit.command("rates")
@_common
def limit_rates(config_path, seed, out_dir, threads):
    """Monte Carlo estimates of the escape rate constants q_i, q_ij."""
    def go():
        _require(config_path)
        cfg = _load(config_path, seed, "rates")
        table = harness.study_rates(cfg, out_dir=out_dir)
        for i in table.fields:
            est = table[i]
            click.echo(f"q_{i} = {est.q:.6g} +/- {est.q_se:.2g} "
                       f"(l*={est.l_star}, {est.n_escaped} escapes)")
        return table
    _run(go)


@limit.command("ctmc")
@click.option("--class", "class_index", type=int, default=None,
              help="Communication-class index from the transition graph.")
@_common
def limit_ctmc(config_path, seed, out_dir, threads, class_index):
    """Reduce sampled rates to the limiting CTMC of one communication class."""
    def go():
        _require(config_path)
        cfg = _load(config_path, seed, "rates")
        model = harness.study_ctmc(cfg, class_index=class_index, out_dir=out_dir)
        click.echo(f"states {[int(s) for s in model.states]} "
                   f"(0 = cemetery){' killed' if model.killed else ''}")
        click.echo(f"holding rates {[float(f'{h:.6g}') for h in model.hold]}")
        return model
    _run(go)


@main.group()
def compare():
    """Simulation versus limit-theory comparisons."""


@compare.command("ctmc")
@_common
def compare_ctmc(config_path, seed, out_dir, threads):
    """Scaled exit times vs Exp(1) and destination frequencies vs rates."""
    def go():
        _require(config_path)
        cfg = _load(config_path, seed, "ctmc-compare")
        rep = harness.study_ctmc_compare(cfg, out_dir=out_dir, threads=threads)
        click.echo(f"scaled exits: mean {rep.scaled_mean:.4f}, var {rep.scaled_var:.4f}, "
                   f"KS {rep.ks:.4f} ({rep.replications - rep.censored} uncensored, "
                   f"{rep.censored} censored)")
        for d in rep.destinations:
            click.echo(f"  -> field {d.field}: observed {d.observed:.4f} "
                       f"predicted {d.predicted:.4f} (se {d.binom_se:.4f})")
        return rep
    _run(go)


@main.group()
def inject():
    """Heavy-tail noise injection."""


@inject.command("demo")
@_common
def inject_demo(config_path, seed, out_dir, threads):
    """Two-phase injected SGD vs plain small-batch SGD on a synthetic problem."""
    def go():
        if config_path is None:
            doc = {"study": "inject-demo"}
            if seed is not None:
                doc["seed"] = seed
            cfg = harness.load_config(doc)
        else:
            cfg = _load(config_path, seed, "inject-demo")
        rep = harness.run_injection_demo(cfg, out_dir=out_dir, threads=threads)
        click.echo(f"wide-field finishes over {rep.n_seeds} seeds: "
                   f"injected {rep.wide_injected}, plain {rep.wide_plain} "
                   f"(wide fields {list(rep.m_large)})")
        click.echo(f"mean sharpness: injected {rep.sharpness_injected:.6g}, "
                   f"plain {rep.sharpness_plain:.6g}")
        return rep
    _run(go)


if __name__ == "__main__":  # pragma: no cover
    main()
