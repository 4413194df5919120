"""File writers and readers for cubes, images, contours and reports."""
