import numpy as np
import pytest

from kfbi.geometry import build_curve


ELLIPSE_DESC = {
    "kind": "rotated-ellipse",
    "cx": 0.2, "cy": 0.4, "ra": 1.0, "rb": 0.5, "alpha": np.pi / 7,
}


@pytest.fixture(scope="session")
def ellipse_curve():
    return build_curve(dict(ELLIPSE_DESC))


@pytest.fixture(scope="session")
def unit_circle():
    return build_curve(
        {"kind": "rotated-ellipse", "cx": 0.0, "cy": 0.0, "ra": 1.0, "rb": 1.0, "alpha": 0.0}
    )


def eq1_solution():
    u = lambda x, y: np.exp(x) * np.cos(y) + np.exp(y) * np.sin(x)  # noqa: E731
    ux = lambda x, y: np.exp(x) * np.cos(y) + np.exp(y) * np.cos(x)  # noqa: E731
    uy = lambda x, y: -np.exp(x) * np.sin(y) + np.exp(y) * np.sin(x)  # noqa: E731
    return u, ux, uy
