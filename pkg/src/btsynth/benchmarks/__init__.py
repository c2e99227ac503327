"""Shipped benchmark domains, scenarios and demonstrations."""

from __future__ import annotations

from importlib import resources

from ..world import DemoTrace, Domain, Scenario, parse_domain, parse_scenario, parse_trace

SUITES = ("fetch", "stack3")


def read_text(filename: str) -> str:
    return resources.files(__name__).joinpath(filename).read_text(encoding="utf-8")


def load_suite(name: str) -> tuple[Domain, Scenario]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    domain = parse_domain(read_text(f"{name}.dom"))
    return domain, parse_scenario(read_text(f"{name}.scn"), domain)


def stack3_demos() -> list[DemoTrace]:
    domain, _ = load_suite("stack3")
    return [parse_trace(read_text(f"stack3_demo{i}.trc"), domain) for i in (1, 2, 3)]
