"""Simulator for PendingIntent provenance confusion in Android SDK partner
authentication, and for the kernel-uid based defense that closes it."""

__version__ = "0.1.0"
