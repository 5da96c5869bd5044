"""Independent reference implementations the tests compare against."""

from __future__ import annotations


def lru_reference(accesses, capacity):
    """Hit/miss list of a textbook LRU cache (list ordered oldest -> newest)."""
    cache = []
    out = []
    for page in accesses:
        if page in cache:
            cache.remove(page)
            cache.append(page)
            out.append("hit")
        else:
            if len(cache) == capacity:
                cache.pop(0)
            cache.append(page)
            out.append("miss")
    return out


def gradual_reference(n_regions, hot, lowest, highest, incr, triggers):
    """Weight history of the gradual window, one snapshot per trigger.

    The window starts on region 0. Each trigger moves the outgoing region
    down and the incoming region up by ``incr`` (clamped); once both sit at
    their bounds the next trigger shifts the window by one region.
    """
    w = [lowest] * n_regions
    w[0] = hot
    out_r, in_r = None, 0
    history = []
    for _ in range(triggers):
        if out_r is None or (w[out_r] <= lowest and w[in_r] >= highest):
            out_r, in_r = in_r, (in_r + 1) % n_regions
        w[out_r] = max(lowest, w[out_r] - incr)
        w[in_r] = min(highest, w[in_r] + incr)
        history.append(list(w))
    return history
