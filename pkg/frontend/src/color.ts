/**
 * Stable distinct overlay colors. The hue is a hash of the object id, so
 * the same object keeps its color across reloads and across clients.
 */

export type Rgb = [number, number, number];

function hslToRgb(h: number, s: number, l: number): Rgb {
  const c = (1 - Math.abs(2 * l - 1)) * s;
  const hp = h / 60;
  const x = c * (1 - Math.abs((hp % 2) - 1));
  let r = 0, g = 0, b = 0;
  if (hp < 1) [r, g, b] = [c, x, 0];
  else if (hp < 2) [r, g, b] = [x, c, 0];
  else if (hp < 3) [r, g, b] = [0, c, x];
  else if (hp < 4) [r, g, b] = [0, x, c];
  else if (hp < 5) [r, g, b] = [x, 0, c];
  else [r, g, b] = [c, 0, x];
  const m = l - c / 2;
  return [Math.round((r + m) * 255), Math.round((g + m) * 255),
          Math.round((b + m) * 255)];
}

/** Golden-angle hue walk keeps consecutive ids far apart on the wheel. */
export function colorFor(objectId: number): Rgb {
  const hue = (objectId * 137.50776405) % 360;
  return hslToRgb(hue, 0.72, 0.55);
}
