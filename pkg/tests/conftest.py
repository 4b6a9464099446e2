import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from memrl import backend


@pytest.fixture(params=backend.available())
def kernel_backend(request):
    """Run a test under every available kernel backend."""
    prev = backend.name
    backend.use(request.param)
    yield request.param
    backend.use(prev)
