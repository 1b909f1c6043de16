"""Configuration, scenes, experiment drivers and command line."""
