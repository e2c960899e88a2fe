/** Swatch colors for garment cards. The corpus has no pixels, so the card
 * shows a color derived from the garment's color attribute when present,
 * otherwise a stable hash of the id. */

const NAMED: Record<string, string> = {
  red: '#c0392b',
  blue: '#2e6da4',
  black: '#222222',
  white: '#f4f4f4',
  mustard: '#d4a017',
  brown: '#7b4a12',
  green: '#2e7d4f',
  navy: '#1f3a5f',
  maroon: '#6e1423',
  beige: '#d9c7a7',
  'light blue': '#9ec9e2',
  'dark gray': '#555a5f',
};

function hashHue(text: string): number {
  let h = 0;
  for (let i = 0; i < text.length; i++) {
    h = (h * 31 + text.charCodeAt(i)) >>> 0;
  }
  return h % 360;
}

export function swatchColor(attributes: Record<string, string>, id: string): string {
  const color = attributes['color'];
  if (color !== undefined) {
    const named = NAMED[color];
    if (named !== undefined) return named;
    return `hsl(${hashHue(color)}, 60%, 55%)`;
  }
  return `hsl(${hashHue(id)}, 25%, 70%)`;
}
