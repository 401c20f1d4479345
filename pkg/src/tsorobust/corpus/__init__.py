"""Example programs shipped with the package."""

from importlib import resources

from ..program import Program, parse_program


def names() -> list[str]:
    return sorted(
        f.name[:-5] for f in resources.files(__name__).iterdir() if f.name.endswith(".prog")
    )


def text(name: str) -> str:
    return resources.files(__name__).joinpath(f"{name}.prog").read_text(encoding="utf-8")


def load(name: str) -> Program:
    return parse_program(text(name))


# templates of a parameterized program rather than a fixed thread set
PARAMETERIZED = ("param_dekker", "param_dekker_fenced")
