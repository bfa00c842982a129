"""Regenerate src/adcompliance/data/glyphs.png.

Row 0: printable ASCII 32..126 in 6x11 cells (Pillow's built-in bitmap font).
Row 1: 12x12 monochrome emoji glyphs drawn below.
The augmentation code reads only the PNG, never a system font.
"""

from pathlib import Path

from PIL import Image, ImageDraw, ImageFont

EMOJI = {
    "smile": """
....####....
..##....##..
.#........#.
#..##..##..#
#..##..##..#
#..........#
#..........#
#.#......#.#
#..#....#..#
.#..####..#.
..##....##..
....####....
""",
    "heart": """
............
..###..###..
.#####.####.
############
############
############
.##########.
..########..
...######...
....####....
.....##.....
............
""",
    "star": """
.....##.....
.....##.....
....####....
....####....
############
.##########.
..########..
...######...
...######...
..###..###..
..##....##..
.#........#.
""",
    "wink": """
....####....
..##....##..
.#........#.
#..##......#
#..##..###.#
#..........#
#..........#
#.########.#
#..#....#..#
.#..####..#.
..##....##..
....####....
""",
}

OUT = Path(__file__).resolve().parents[1] / "src" / "adcompliance" / "data" / "glyphs.png"


def main():
    font = ImageFont.load_default_imagefont()
    chars = [chr(c) for c in range(32, 127)]
    width = max(len(chars) * 6, len(EMOJI) * 12)
    sheet = Image.new("1", (width, 23), 0)
    draw = ImageDraw.Draw(sheet)
    for i, ch in enumerate(chars):
        draw.text((i * 6, 0), ch, font=font, fill=1)
    for j, art in enumerate(EMOJI.values()):
        rows = art.strip().splitlines()
        for y, row in enumerate(rows):
            for x, px in enumerate(row):
                if px == "#":
                    sheet.putpixel((j * 12 + x, 11 + y), 1)
    sheet.save(OUT, optimize=False)
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
