from lgmvu.server.sessions import ServeConfig, SessionRegistry, Stats, snapshot_stats

__all__ = ["ServeConfig", "SessionRegistry", "Stats", "snapshot_stats"]
