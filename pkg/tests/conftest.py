import hypothesis
import pytest

from darecache import trace_from_requests

hypothesis.settings.register_profile("suite", deadline=None, max_examples=50)
hypothesis.settings.load_profile("suite")

# Worked example: files a..e mapped to ids 1..5, cache size 3, initial {a,b,c}.
TABLE1_REQUESTS = [1, 5, 3, 1, 4, 1, 2, 5, 1]


@pytest.fixture
def table1_trace():
    return trace_from_requests(TABLE1_REQUESTS, file_count=5, initial_cache={1, 2, 3})
