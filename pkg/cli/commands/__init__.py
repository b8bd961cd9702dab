"""CLI commands package."""