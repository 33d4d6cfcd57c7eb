"""SemiFlex: semi-on-demand feeder route design."""
