"""CLI utilities package."""