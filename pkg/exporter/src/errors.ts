export class BackboneUnavailable extends Error {
  constructor(name: string, detail: string) {
    super(`backbone ${name} unavailable: ${detail}`);
    this.name = "BackboneUnavailable";
  }
}

export class ImageDecodeError extends Error {
  readonly path: string;
  constructor(path: string, detail: string) {
    super(`cannot decode ${path}: ${detail}`);
    this.name = "ImageDecodeError";
    this.path = path;
  }
}

export class ShapeDrift extends Error {
  constructor(path: string, got: number, expected: number) {
    super(`embedding dimension drifted at ${path}: got ${got}, expected ${expected}`);
    this.name = "ShapeDrift";
  }
}
